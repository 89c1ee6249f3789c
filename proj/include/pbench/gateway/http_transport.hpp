#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

#include "pbench/gateway/gateway.hpp"

namespace pbench::gateway {

/// Chat-completions over HTTP(S): POST <endpoint>/chat/completions with a
/// messages array (system, user) and a Bearer key read from the profile's
/// environment variable.
class HttpTransport : public Transport {
 public:
  struct Timeouts {
    std::chrono::seconds connect{10};
    std::chrono::seconds read{180};
  };

  HttpTransport() = default;
  explicit HttpTransport(Timeouts timeouts) : timeouts_(timeouts) {}

  ChatResponse send(const ChatRequest& request, const ProviderProfile& profile,
                    const SamplingParams& params) override;

  static nlohmann::json request_body(const ChatRequest& request, const ProviderProfile& profile,
                                     const SamplingParams& params);
  /// Maps a 200 body to a response; throws Protocol or
  /// ContentRefusedByProvider.
  static ChatResponse parse_body(const std::string& body, const ProviderProfile& profile);

 private:
  Timeouts timeouts_;
};

}  // namespace pbench::gateway
