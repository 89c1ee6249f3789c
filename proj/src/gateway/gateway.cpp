#include "pbench/gateway/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "pbench/gateway/cache.hpp"
#include "pbench/gateway/http_transport.hpp"

namespace pbench::gateway {

using namespace std::chrono;

std::string_view to_string(GatewayError::Kind kind) {
  switch (kind) {
    case GatewayError::Kind::Transport: return "Transport";
    case GatewayError::Kind::Auth: return "Auth";
    case GatewayError::Kind::RateLimited: return "RateLimited";
    case GatewayError::Kind::ContentRefusedByProvider: return "ContentRefusedByProvider";
    case GatewayError::Kind::Protocol: return "Protocol";
    case GatewayError::Kind::ScriptMiss: return "ScriptMiss";
    case GatewayError::Kind::CacheCorrupt: return "CacheCorrupt";
    case GatewayError::Kind::Config: return "Config";
  }
  return "Unknown";
}

void ProviderProfile::validate() const {
  auto bad = [&](const std::string& why) {
    throw GatewayError(GatewayError::Kind::Config, name, "provider '" + name + "': " + why);
  };
  if (name.empty()) bad("empty profile name");
  if (model.empty()) bad("empty model id");
  if (!(params.temperature >= 0.0 && params.temperature <= 2.0)) bad("temperature outside [0,2]");
  if (!(params.top_p > 0.0 && params.top_p <= 1.0)) bad("top_p outside (0,1]");
  if (params.max_tokens < 1) bad("max_tokens must be positive");
  if (requests_per_minute < 0) bad("negative requests_per_minute");
  if (is_mock()) {
    if (!mock) bad("mock endpoint without a script");
    return;
  }
  const bool http = endpoint.rfind("http://", 0) == 0 || endpoint.rfind("https://", 0) == 0;
  const auto host_start = endpoint.find("://");
  if (!http || host_start == std::string::npos || endpoint.size() <= host_start + 3 ||
      endpoint[host_start + 3] == '/') {
    bad("endpoint must be an http(s) URL or \"mock\", got '" + endpoint + "'");
  }
}

milliseconds RetryPolicy::backoff(int attempt) const {
  if (attempt < 1) attempt = 1;
  const auto shift = std::min(attempt - 1, 30);
  const long long raw = backoff_base.count() * (1LL << shift);
  return milliseconds(std::min<long long>(raw, backoff_cap.count()));
}

void RetryPolicy::validate() const {
  if (max_attempts < 1) {
    throw GatewayError(GatewayError::Kind::Config, "", "retry max_attempts must be >= 1");
  }
  if (backoff_base.count() < 0 || backoff_cap.count() < 0) {
    throw GatewayError(GatewayError::Kind::Config, "", "retry backoff must be non-negative");
  }
}

SamplingParams effective_params(const ChatRequest& request, const ProviderProfile& profile) {
  return request.params ? *request.params : profile.params;
}

RateLimiter::RateLimiter(double requests_per_minute, Clock clock, Sleeper sleep)
    : rate_per_ms_(requests_per_minute / 60000.0),
      capacity_(std::max(1.0, requests_per_minute / 60.0)),
      tokens_(capacity_),
      last_(clock()),
      clock_(std::move(clock)),
      sleep_(std::move(sleep)) {}

void RateLimiter::acquire() {
  while (true) {
    milliseconds wait{0};
    {
      std::lock_guard lock(mu_);
      const auto now = clock_();
      const double elapsed = duration<double, std::milli>(now - last_).count();
      last_ = now;
      tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_ms_);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = milliseconds(static_cast<long long>(std::ceil((1.0 - tokens_) / rate_per_ms_)));
    }
    sleep_(wait);
  }
}

Gateway::Gateway(GatewayOptions options)
    : options_(std::move(options)), slots_(std::max(1, options_.max_concurrency)) {
  options_.retry.validate();
  if (!options_.sleep) options_.sleep = [](milliseconds d) { std::this_thread::sleep_for(d); };
  if (!options_.clock) options_.clock = [] { return steady_clock::now(); };
  if (!options_.http) options_.http = std::make_shared<HttpTransport>();
}

Gateway::~Gateway() = default;

RateLimiter& Gateway::limiter_for(const ProviderProfile& profile) {
  std::lock_guard lock(mu_);
  auto& slot = limiters_[profile.name];
  if (!slot) {
    slot = std::make_unique<RateLimiter>(profile.requests_per_minute, options_.clock,
                                         options_.sleep);
  }
  return *slot;
}

ChatResponse Gateway::complete(const ChatRequest& request, const ProviderProfile& profile) {
  profile.validate();
  if (request.user_message.empty()) {
    throw GatewayError(GatewayError::Kind::Protocol, profile.name, "empty user message");
  }
  const SamplingParams params = effective_params(request, profile);
  Transport& transport = profile.mock ? *profile.mock : *options_.http;

  for (int attempt = 1;; ++attempt) {
    if (profile.requests_per_minute > 0) limiter_for(profile).acquire();
    try {
      slots_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots_};
      {
        std::lock_guard lock(mu_);
        ++calls_[profile.name];
      }
      ChatResponse response = transport.send(request, profile, params);
      response.provider = profile.name;
      response.cached = false;
      response.attempts = attempt;
      return response;
    } catch (GatewayError& e) {
      e.set_attempts(attempt);
      if (!options_.retry.is_retryable(e.kind()) || attempt >= options_.retry.max_attempts) throw;
      options_.sleep(std::max(options_.retry.backoff(attempt), e.retry_after()));
    }
  }
}

ChatResponse Gateway::complete_cached(const ChatRequest& request, const ProviderProfile& profile,
                                      ResponseCache& cache) {
  const std::string key = ResponseCache::key(request, profile);
  auto lock = cache.lock(key);
  if (auto hit = cache.get(key)) {
    ++cache_hits_;
    ChatResponse r;
    r.text = hit->response_text;
    r.usage = hit->usage;
    r.provider = profile.name;
    r.cached = true;
    r.attempts = 0;
    return r;
  }
  ChatResponse fresh = complete(request, profile);
  cache.put(key, fresh);
  return fresh;
}

std::size_t Gateway::provider_calls(const std::string& profile_name) const {
  std::lock_guard lock(mu_);
  auto it = calls_.find(profile_name);
  return it == calls_.end() ? 0 : it->second;
}

std::size_t Gateway::total_provider_calls() const {
  std::lock_guard lock(mu_);
  std::size_t total = 0;
  for (const auto& [name, n] : calls_) total += n;
  return total;
}

}  // namespace pbench::gateway
