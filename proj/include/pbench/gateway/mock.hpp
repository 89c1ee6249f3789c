#pragma once

#include <json.hpp>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "pbench/gateway/gateway.hpp"

namespace pbench::gateway {

/// One scripted reply: text, or an injected failure of the given kind.
struct MockReply {
  std::string text;
  std::optional<GatewayError::Kind> error;
};

struct MockRule {
  enum class Match { Substring, Regex };

  Match match = Match::Substring;
  std::string pattern;  // applied to the user message
  /// Optional extra condition on the system message (substring).
  std::optional<std::string> system_contains;
  /// Successive matches of the same request walk this list; the last reply
  /// repeats once it is exhausted.
  std::vector<MockReply> replies;
};

/// Ordered rules; the first matching rule answers.
///
/// JSON form:
///   [{"match": "Selected Environments", "reply": "['Library']"},
///    {"regex": "final score", "replies": ["no verdict", "... is 4."]},
///    {"match": "x", "replies": [{"error": "RateLimited"}, "ok"]}]
struct MockScript {
  std::vector<MockRule> rules;

  static MockScript from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Deterministic scripted provider. Reply sequences advance per distinct
/// request (rule, system, user with any malformed-output retry suffix
/// removed), so concurrent scheduling cannot change which reply a request
/// receives.
class MockTransport : public Transport {
 public:
  explicit MockTransport(MockScript script);

  ChatResponse send(const ChatRequest& request, const ProviderProfile& profile,
                    const SamplingParams& params) override;

  const MockScript& script() const { return script_; }

 private:
  MockScript script_;
  std::vector<std::optional<std::regex>> compiled_;
  std::mutex mu_;
  std::map<std::string, std::size_t> cursor_;
};

/// A profile answered by `script`.
ProviderProfile mock_provider(std::string name, MockScript script,
                              std::string model = "mock-model", SamplingParams params = {});

}  // namespace pbench::gateway
