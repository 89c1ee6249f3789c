#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <set>
#include <stdexcept>
#include <string>

namespace pbench::gateway {

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 2048;

  bool operator==(const SamplingParams&) const = default;
};

class Transport;

struct ProviderProfile {
  std::string name;
  std::string endpoint;  // base URL (".../v1") or the literal "mock"
  std::string model;
  std::string api_key_env;  // name of the environment variable holding the key
  SamplingParams params;
  double requests_per_minute = 0;  // 0 disables rate limiting
  /// Set for mock profiles; shared by every copy of the profile.
  std::shared_ptr<Transport> mock;

  bool is_mock() const { return endpoint == "mock"; }
  /// Throws GatewayError(Config) on an empty name or model, temperature
  /// outside [0,2], top_p outside (0,1], max_tokens < 1, or an endpoint that
  /// is neither "mock" nor an http(s) URL.
  void validate() const;
};

struct ChatRequest {
  std::optional<std::string> system_message;
  std::string user_message;
  std::optional<SamplingParams> params;  // overrides the profile's
};

struct TokenUsage {
  int prompt = 0;
  int completion = 0;
};

struct ChatResponse {
  std::string text;
  TokenUsage usage;
  std::string provider;
  bool cached = false;
  int attempts = 0;  // transport calls made for this response; 0 on a cache hit
};

class GatewayError : public std::runtime_error {
 public:
  enum class Kind {
    Transport,
    Auth,
    RateLimited,
    ContentRefusedByProvider,
    Protocol,
    ScriptMiss,
    CacheCorrupt,
    Config,
  };

  GatewayError(Kind kind, std::string provider, const std::string& message,
               std::chrono::milliseconds retry_after = std::chrono::milliseconds{0})
      : std::runtime_error(message),
        kind_(kind),
        provider_(std::move(provider)),
        retry_after_(retry_after) {}

  Kind kind() const { return kind_; }
  const std::string& provider() const { return provider_; }
  /// Server-suggested wait (Retry-After), zero when absent.
  std::chrono::milliseconds retry_after() const { return retry_after_; }
  int attempts() const { return attempts_; }
  void set_attempts(int n) { attempts_ = n; }

 private:
  Kind kind_;
  std::string provider_;
  std::chrono::milliseconds retry_after_;
  int attempts_ = 1;
};

std::string_view to_string(GatewayError::Kind kind);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{8000};
  std::set<GatewayError::Kind> retryable = {GatewayError::Kind::Transport,
                                           GatewayError::Kind::RateLimited};

  /// Delay before attempt `attempt + 1` (attempt is 1-based):
  /// min(cap, base * 2^(attempt-1)). Deterministic, no jitter.
  std::chrono::milliseconds backoff(int attempt) const;
  bool is_retryable(GatewayError::Kind kind) const { return retryable.contains(kind); }
  void validate() const;
};

/// Sends one request; implementations throw GatewayError.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual ChatResponse send(const ChatRequest& request, const ProviderProfile& profile,
                            const SamplingParams& params) = 0;
};

using Clock = std::function<std::chrono::steady_clock::time_point()>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Token bucket refilled at requests_per_minute / 60 tokens per second with
/// a burst of one second's worth (at least one token).
class RateLimiter {
 public:
  RateLimiter(double requests_per_minute, Clock clock, Sleeper sleep);
  void acquire();

 private:
  double rate_per_ms_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  Clock clock_;
  Sleeper sleep_;
  std::mutex mu_;
};

class ResponseCache;

struct GatewayOptions {
  RetryPolicy retry;
  int max_concurrency = 8;
  Sleeper sleep;  // defaults to std::this_thread::sleep_for
  Clock clock;    // defaults to steady_clock::now
  /// Used for non-mock profiles; defaults to HttpTransport.
  std::shared_ptr<Transport> http;
};

/// Entry point for all model calls: retries, per-profile rate limiting, a
/// global concurrency bound and call accounting. Thread-safe.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});
  ~Gateway();

  ChatResponse complete(const ChatRequest& request, const ProviderProfile& profile);
  /// Cache lookup first; a miss delegates to complete() and stores the result.
  ChatResponse complete_cached(const ChatRequest& request, const ProviderProfile& profile,
                               ResponseCache& cache);

  /// Transport calls issued for a profile (every attempt counts).
  std::size_t provider_calls(const std::string& profile_name) const;
  std::size_t total_provider_calls() const;
  std::size_t cache_hits() const { return cache_hits_.load(); }

  const RetryPolicy& retry_policy() const { return options_.retry; }

 private:
  RateLimiter& limiter_for(const ProviderProfile& profile);

  GatewayOptions options_;
  std::counting_semaphore<> slots_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<RateLimiter>> limiters_;
  std::map<std::string, std::size_t> calls_;
  std::atomic<std::size_t> cache_hits_{0};
};

/// Sampling parameters actually sent: the request override, else the profile's.
SamplingParams effective_params(const ChatRequest& request, const ProviderProfile& profile);

}  // namespace pbench::gateway
