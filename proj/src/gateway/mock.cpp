#include "pbench/gateway/mock.hpp"

#include "pbench/parsing/parsers.hpp"

namespace pbench::gateway {

using nlohmann::json;

namespace {

[[noreturn]] void bad_script(const std::string& why) {
  throw GatewayError(GatewayError::Kind::Config, "mock", "mock script: " + why);
}

std::optional<GatewayError::Kind> parse_kind(const std::string& s) {
  using K = GatewayError::Kind;
  for (K k : {K::Transport, K::Auth, K::RateLimited, K::ContentRefusedByProvider, K::Protocol,
              K::ScriptMiss, K::CacheCorrupt, K::Config}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

MockReply parse_reply(const json& j) {
  if (j.is_string()) return {j.get<std::string>(), std::nullopt};
  if (!j.is_object() || !j.contains("error")) bad_script("reply must be a string or {\"error\": kind}");
  auto kind = parse_kind(j.at("error").get<std::string>());
  if (!kind) bad_script("unknown error kind " + j.at("error").dump());
  return {j.value("text", std::string()), kind};
}

json reply_to_json(const MockReply& r) {
  if (!r.error) return r.text;
  json j = {{"error", std::string(to_string(*r.error))}};
  if (!r.text.empty()) j["text"] = r.text;
  return j;
}

std::string strip_retry_suffix(const std::string& user) {
  const std::string suffix = "\n\n" + std::string(parsing::kMalformedRetrySuffix);
  if (user.size() >= suffix.size() &&
      user.compare(user.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return user.substr(0, user.size() - suffix.size());
  }
  return user;
}

int rough_tokens(const std::string& s) { return static_cast<int>((s.size() + 3) / 4); }

}  // namespace

MockScript MockScript::from_json(const json& j) {
  if (!j.is_array()) bad_script("expected an array of rules");
  MockScript script;
  for (const auto& r : j) {
    if (!r.is_object()) bad_script("rule must be an object");
    for (const auto& [key, value] : r.items()) {
      if (key != "match" && key != "regex" && key != "system" && key != "reply" &&
          key != "replies") {
        bad_script("unknown rule field '" + key + "'");
      }
    }
    MockRule rule;
    if (r.contains("match") == r.contains("regex")) {
      bad_script("rule needs exactly one of \"match\" or \"regex\"");
    }
    if (r.contains("regex")) {
      rule.match = MockRule::Match::Regex;
      rule.pattern = r.at("regex").get<std::string>();
    } else {
      rule.pattern = r.at("match").get<std::string>();
    }
    if (r.contains("system")) rule.system_contains = r.at("system").get<std::string>();
    if (r.contains("reply") == r.contains("replies")) {
      bad_script("rule needs exactly one of \"reply\" or \"replies\"");
    }
    if (r.contains("reply")) {
      rule.replies.push_back(parse_reply(r.at("reply")));
    } else {
      for (const auto& reply : r.at("replies")) rule.replies.push_back(parse_reply(reply));
    }
    if (rule.replies.empty()) bad_script("rule with no replies");
    script.rules.push_back(std::move(rule));
  }
  return script;
}

json MockScript::to_json() const {
  json out = json::array();
  for (const auto& rule : rules) {
    json r;
    r[rule.match == MockRule::Match::Regex ? "regex" : "match"] = rule.pattern;
    if (rule.system_contains) r["system"] = *rule.system_contains;
    json replies = json::array();
    for (const auto& reply : rule.replies) replies.push_back(reply_to_json(reply));
    r["replies"] = replies;
    out.push_back(r);
  }
  return out;
}

MockTransport::MockTransport(MockScript script) : script_(std::move(script)) {
  for (const auto& rule : script_.rules) {
    if (rule.match == MockRule::Match::Regex) {
      try {
        compiled_.emplace_back(std::regex(rule.pattern, std::regex::ECMAScript));
      } catch (const std::regex_error& e) {
        bad_script("invalid regex '" + rule.pattern + "': " + e.what());
      }
    } else {
      compiled_.emplace_back(std::nullopt);
    }
  }
}

ChatResponse MockTransport::send(const ChatRequest& request, const ProviderProfile& profile,
                                 const SamplingParams&) {
  const std::string system = request.system_message.value_or("");
  for (std::size_t i = 0; i < script_.rules.size(); ++i) {
    const auto& rule = script_.rules[i];
    const bool hit = compiled_[i] ? std::regex_search(request.user_message, *compiled_[i])
                                  : request.user_message.find(rule.pattern) != std::string::npos;
    if (!hit) continue;
    if (rule.system_contains && system.find(*rule.system_contains) == std::string::npos) continue;

    std::size_t index;
    {
      std::lock_guard lock(mu_);
      const std::string key =
          std::to_string(i) + '\x1f' + system + '\x1f' + strip_retry_suffix(request.user_message);
      index = cursor_[key]++;
    }
    const MockReply& reply = rule.replies[std::min(index, rule.replies.size() - 1)];
    if (reply.error) {
      throw GatewayError(*reply.error, profile.name,
                         "scripted " + std::string(to_string(*reply.error)) + " failure");
    }
    ChatResponse r;
    r.text = reply.text;
    r.usage = {rough_tokens(system) + rough_tokens(request.user_message), rough_tokens(reply.text)};
    return r;
  }
  throw GatewayError(GatewayError::Kind::ScriptMiss, profile.name,
                     "no mock rule matches request to '" + profile.name +
                         "': " + parsing::excerpt(request.user_message, 300));
}

ProviderProfile mock_provider(std::string name, MockScript script, std::string model,
                              SamplingParams params) {
  ProviderProfile p;
  p.name = std::move(name);
  p.endpoint = "mock";
  p.model = std::move(model);
  p.params = params;
  p.mock = std::make_shared<MockTransport>(std::move(script));
  return p;
}

}  // namespace pbench::gateway
