#include "pbench/gateway/http_transport.hpp"

#include <cstdlib>

#include <httplib.h>

namespace pbench::gateway {

using nlohmann::json;
using Kind = GatewayError::Kind;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // base path without trailing slash
};

SplitUrl split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  const auto path_start = endpoint.find('/', scheme_end + 3);
  SplitUrl u;
  u.origin = endpoint.substr(0, path_start);
  u.path = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
  return u;
}

std::chrono::milliseconds parse_retry_after(const httplib::Result& res) {
  if (!res->has_header("Retry-After")) return std::chrono::milliseconds{0};
  const std::string v = res->get_header_value("Retry-After");
  try {
    std::size_t used = 0;
    const double seconds = std::stod(v, &used);
    if (used == v.size() && seconds >= 0) {
      return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
    }
  } catch (const std::exception&) {
  }
  return std::chrono::milliseconds{0};  // HTTP-date form is not honoured
}

std::string body_excerpt(const std::string& body) {
  return body.size() <= 200 ? body : body.substr(0, 200) + "...";
}

}  // namespace

json HttpTransport::request_body(const ChatRequest& request, const ProviderProfile& profile,
                                 const SamplingParams& params) {
  json messages = json::array();
  if (request.system_message) {
    messages.push_back({{"role", "system"}, {"content", *request.system_message}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_message}});
  return {
      {"model", profile.model},
      {"messages", messages},
      {"temperature", params.temperature},
      {"top_p", params.top_p},
      {"max_tokens", params.max_tokens},
  };
}

ChatResponse HttpTransport::parse_body(const std::string& body, const ProviderProfile& profile) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw GatewayError(Kind::Protocol, profile.name,
                       "unparseable response body: " + std::string(e.what()));
  }
  try {
    const auto& choice = j.at("choices").at(0);
    if (choice.value("finish_reason", json()).is_string() &&
        choice.at("finish_reason").get<std::string>() == "content_filter") {
      throw GatewayError(Kind::ContentRefusedByProvider, profile.name,
                         "provider content filter blocked the completion");
    }
    const auto& content = choice.at("message").at("content");
    if (!content.is_string()) {
      throw GatewayError(Kind::Protocol, profile.name, "completion has no text content");
    }
    ChatResponse r;
    r.text = content.get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
      r.usage.prompt = j["usage"].value("prompt_tokens", 0);
      r.usage.completion = j["usage"].value("completion_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw GatewayError(Kind::Protocol, profile.name,
                       "unexpected response shape: " + std::string(e.what()));
  }
}

ChatResponse HttpTransport::send(const ChatRequest& request, const ProviderProfile& profile,
                                 const SamplingParams& params) {
  std::string key;
  if (!profile.api_key_env.empty()) {
    const char* v = std::getenv(profile.api_key_env.c_str());
    if (v == nullptr || *v == '\0') {
      throw GatewayError(Kind::Config, profile.name,
                         "environment variable " + profile.api_key_env + " is not set");
    }
    key = v;
  }

  const SplitUrl url = split_endpoint(profile.endpoint);
  httplib::Client client(url.origin);
  client.set_connection_timeout(timeouts_.connect);
  client.set_read_timeout(timeouts_.read);
  client.set_write_timeout(timeouts_.read);
  httplib::Headers headers;
  if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

  const std::string payload = request_body(request, profile, params).dump();
  auto res = client.Post(url.path + "/chat/completions", headers, payload, "application/json");
  if (!res) {
    throw GatewayError(Kind::Transport, profile.name,
                       "request failed: " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  const std::string what = "HTTP " + std::to_string(status) + ": " + body_excerpt(res->body);
  if (status == 401 || status == 403) throw GatewayError(Kind::Auth, profile.name, what);
  if (status == 429) {
    throw GatewayError(Kind::RateLimited, profile.name, what, parse_retry_after(res));
  }
  if (status >= 500) throw GatewayError(Kind::Transport, profile.name, what);
  if (status < 200 || status >= 300) throw GatewayError(Kind::Protocol, profile.name, what);
  return parse_body(res->body, profile);
}

}  // namespace pbench::gateway
