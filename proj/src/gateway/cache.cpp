#include "pbench/gateway/cache.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pbench/core/digest.hpp"

namespace pbench::gateway {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_hex_key(const std::string& key) {
  if (key.size() != 64) return false;
  for (char c : key) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

CacheEntry decode(const fs::path& path, const std::string& expected_key) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  auto fail = [&](const std::string& why) {
    return GatewayError(GatewayError::Kind::CacheCorrupt, "",
                        "corrupt cache entry " + path.string() + ": " + why);
  };
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  try {
    CacheEntry e;
    e.request_digest = j.at("request_digest").get<std::string>();
    e.response_text = j.at("response_text").get<std::string>();
    e.usage.prompt = j.at("usage").at("prompt").get<int>();
    e.usage.completion = j.at("usage").at("completion").get<int>();
    e.timestamp = j.value("timestamp", std::string());
    if (e.request_digest != expected_key) throw fail("digest does not match file name");
    return e;
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
}

}  // namespace

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

std::string ResponseCache::key(const ChatRequest& request, const ProviderProfile& profile) {
  const SamplingParams p = effective_params(request, profile);
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  json j = {
      {"provider", profile.name},
      {"model", profile.model},
      {"params", {{"temperature", p.temperature}, {"top_p", p.top_p}, {"max_tokens", p.max_tokens}}},
      {"system", request.system_message ? json(*request.system_message) : json(nullptr)},
      {"user", request.user_message},
  };
  return sha256_hex(j.dump());
}

fs::path ResponseCache::path_for(const std::string& key) const {
  return root_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CacheEntry> ResponseCache::get(const std::string& key) const {
  const fs::path path = path_for(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  return decode(path, key);
}

void ResponseCache::put(const std::string& key, const ChatResponse& response) {
  const fs::path path = path_for(key);
  fs::create_directories(path.parent_path());
  json j = {
      {"request_digest", key},
      {"response_text", response.text},
      {"usage", {{"prompt", response.usage.prompt}, {"completion", response.usage.completion}}},
      {"timestamp", utc_timestamp()},
  };
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) {
      throw GatewayError(GatewayError::Kind::CacheCorrupt, response.provider,
                         "cannot write cache entry " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::vector<fs::path> ResponseCache::repair() {
  std::vector<fs::path> removed;
  if (!fs::exists(root_)) return removed;
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root_)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    bool bad = false;
    if (path.extension() == ".tmp") {
      bad = true;  // interrupted write
    } else if (path.extension() == ".json") {
      const std::string key = path.stem().string();
      if (!is_hex_key(key) || path.parent_path().filename() != key.substr(0, 2)) {
        bad = true;
      } else {
        try {
          decode(path, key);
        } catch (const GatewayError&) {
          bad = true;
        }
      }
    }
    if (bad) {
      fs::remove(path);
      removed.push_back(path);
    }
  }
  return removed;
}

std::unique_lock<std::mutex> ResponseCache::lock(const std::string& key) {
  std::mutex* m;
  {
    std::lock_guard guard(map_mu_);
    auto& slot = key_mu_[key];
    if (!slot) slot = std::make_unique<std::mutex>();
    m = slot.get();
  }
  return std::unique_lock<std::mutex>(*m);
}

}  // namespace pbench::gateway
