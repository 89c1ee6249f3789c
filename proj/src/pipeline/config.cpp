#include "pbench/pipeline/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "pbench/core/digest.hpp"
#include "pbench/core/serialization.hpp"
#include "pbench/gateway/mock.hpp"

namespace pbench::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using gateway::ProviderProfile;
using gateway::SamplingParams;

namespace {

const SamplingParams kReasonerDefaults{0.9, 0.9, 2048};
const SamplingParams kAgentDefaults{1.0, 1.0, 2048};
const SamplingParams kEvaluatorDefaults{0.0, 1.0, 2048};

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(what, "cannot read " + what + " file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(what, "invalid JSON in " + path.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(where, "unknown field '" + key + "' in " + where);
  }
}

template <typename T>
T field(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where, "field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

json profile_json(const ProviderProfile& p) {
  json j = {{"name", p.name},
            {"endpoint", p.endpoint},
            {"model", p.model},
            {"temperature", p.params.temperature},
            {"top_p", p.params.top_p},
            {"max_tokens", p.params.max_tokens}};
  if (auto* mock = dynamic_cast<gateway::MockTransport*>(p.mock.get())) {
    j["script"] = mock->script().to_json();
  }
  return j;
}

std::vector<ProviderProfile> profiles_from(const json& j, const char* key, const fs::path& base,
                                           const SamplingParams& defaults, const char* role) {
  if (!j.contains(key)) return {};
  if (!j.at(key).is_array()) throw ConfigError(key, std::string("'") + key + "' must be an array");
  std::vector<ProviderProfile> out;
  for (const auto& p : j.at(key)) out.push_back(profile_from_json(p, base, defaults, role));
  return out;
}

}  // namespace

const TaskSpec& BenchmarkConfig::task(TaskKind kind) const {
  for (const auto& t : tasks) {
    if (t.kind == kind) return t;
  }
  throw ConfigError("tasks", "no task spec for " + std::string(to_string(kind)));
}

ProviderProfile profile_from_json(const json& j, const fs::path& base_dir,
                                  const SamplingParams& defaults, const std::string& role) {
  if (!j.is_object()) throw ConfigError(role, "provider profile for " + role + " must be an object");
  reject_unknown(j,
                 {"name", "endpoint", "model", "api_key_env", "temperature", "top_p", "max_tokens",
                  "requests_per_minute", "script"},
                 role + " profile");
  ProviderProfile p;
  p.name = field<std::string>(j, "name", "", role);
  p.endpoint = field<std::string>(j, "endpoint", "", role);
  p.model = field<std::string>(j, "model", "", role);
  p.api_key_env = field<std::string>(j, "api_key_env", "", role);
  p.params.temperature = field<double>(j, "temperature", defaults.temperature, role);
  p.params.top_p = field<double>(j, "top_p", defaults.top_p, role);
  p.params.max_tokens = field<int>(j, "max_tokens", defaults.max_tokens, role);
  p.requests_per_minute = field<double>(j, "requests_per_minute", 0.0, role);
  if (p.name.empty()) throw ConfigError(role, role + " profile needs a name");

  if (j.contains("script")) {
    if (!p.is_mock()) {
      throw ConfigError(p.name, "provider '" + p.name + "': 'script' requires endpoint \"mock\"");
    }
    const json& s = j.at("script");
    json rules = s.is_string() ? read_json_file(resolve(base_dir, s.get<std::string>()),
                                                "mock script for " + p.name)
                               : s;
    try {
      p.mock = std::make_shared<gateway::MockTransport>(gateway::MockScript::from_json(rules));
    } catch (const gateway::GatewayError& e) {
      throw ConfigError(p.name, "provider '" + p.name + "': " + e.what());
    }
  }
  try {
    p.validate();
  } catch (const gateway::GatewayError& e) {
    throw ConfigError(p.name, e.what());
  }
  return p;
}

void validate(const BenchmarkConfig& c) {
  if (c.run_id.empty() || c.run_id.find('/') != std::string::npos || c.run_id.front() == '.') {
    throw ConfigError("run_id", "run_id must be a non-empty name without '/'");
  }
  if (c.personas.empty()) throw ConfigError("personas", "no personas selected");
  std::set<std::string> ids;
  for (const auto& p : c.personas) {
    if (!ids.insert(p.id).second) throw ConfigError("personas", "duplicate persona id " + p.id);
  }
  if (c.pool.empty()) throw ConfigError("environments", "environment pool is empty");
  std::set<TaskKind> kinds;
  for (const auto& t : c.tasks) kinds.insert(t.kind);
  if (c.tasks.size() != kAllTasks.size() || kinds.size() != kAllTasks.size()) {
    throw ConfigError("tasks", "expected exactly one spec for each of the five tasks");
  }
  if (c.questions_per_task < 1) throw ConfigError("questions_per_task", "questions_per_task must be >= 1");
  if (c.concurrency < 1) throw ConfigError("concurrency", "concurrency must be >= 1");
  if (c.parse_retries < 0) throw ConfigError("parse_retries", "parse_retries must be >= 0");
  try {
    c.retry.validate();
  } catch (const gateway::GatewayError& e) {
    throw ConfigError("retry", e.what());
  }
  for (const ProviderProfile* p : {&c.reasoner, &c.agent}) {
    try {
      p->validate();
    } catch (const gateway::GatewayError& e) {
      throw ConfigError(p->name, e.what());
    }
  }
  if (c.evaluators.empty()) throw ConfigError("evaluators", "at least one evaluator is required");
  std::set<std::string> names;
  for (const auto& e : c.evaluators) {
    try {
      e.validate();
    } catch (const gateway::GatewayError& err) {
      throw ConfigError(e.name, err.what());
    }
    if (!names.insert(e.name).second) {
      throw ConfigError(e.name, "duplicate evaluator name '" + e.name + "'");
    }
    if (e.params.temperature != 0.0) {
      throw ConfigError(e.name, "evaluator '" + e.name + "' must run at temperature 0");
    }
    if (e.model == c.agent.model) {
      throw ConfigError(e.name, "evaluator '" + e.name + "' uses the agent's model '" + e.model +
                                    "'; a model may not judge its own responses");
    }
  }
}

std::string config_digest(const BenchmarkConfig& c) {
  json j;
  j["personas"] = c.personas;
  j["pool"] = c.pool.entries();
  j["tasks"] = c.tasks;
  j["prompts"] = {c.prompts.environment_selection_template().body(),
                  c.prompts.question_generation_template().body(),
                  c.prompts.persona_system_prompt_template().body(),
                  c.prompts.score_examples_template().body()};
  j["refusal"] = {{"patterns", c.refusal.patterns()}, {"continuations", c.refusal.continuations()}};
  j["reasoner"] = profile_json(c.reasoner);
  j["agent"] = profile_json(c.agent);
  j["evaluators"] = json::array();
  for (const auto& e : c.evaluators) j["evaluators"].push_back(profile_json(e));
  j["questions_per_task"] = c.questions_per_task;
  j["parse_retries"] = c.parse_retries;
  j["run_id"] = c.run_id;
  return sha256_hex(j.dump());
}

namespace {

const std::set<std::string> kConfigFields = {
    "run_id",         "runs_root",       "cache_dir",          "personas_file",
    "persona_ids",    "persona_limit",   "environments_file",  "tasks_dir",
    "rubrics_dir",    "prompts_dir",     "refusal_patterns_file", "questions_per_task",
    "concurrency",    "parse_retries",   "retry",              "fixed_timestamps",
    "reasoner",       "agent",           "evaluators"};

BenchmarkConfig parse_common(const json& j, const fs::path& base, bool need_reasoner) {
  const std::string where = "config";
  BenchmarkConfig c;
  c.run_id = field<std::string>(j, "run_id", "", where);
  c.runs_root = field<std::string>(j, "runs_root", "runs", where);
  c.cache_dir = field<std::string>(j, "cache_dir", "", where);
  c.questions_per_task = field<int>(j, "questions_per_task", 10, where);
  c.concurrency = field<int>(j, "concurrency", 4, where);
  c.parse_retries = field<int>(j, "parse_retries", 2, where);
  c.fixed_timestamps = field<bool>(j, "fixed_timestamps", false, where);

  if (j.contains("retry")) {
    const json& r = j.at("retry");
    reject_unknown(r, {"max_attempts", "backoff_base_ms", "backoff_cap_ms"}, "retry");
    c.retry.max_attempts = field<int>(r, "max_attempts", c.retry.max_attempts, "retry");
    c.retry.backoff_base = std::chrono::milliseconds(
        field<long long>(r, "backoff_base_ms", c.retry.backoff_base.count(), "retry"));
    c.retry.backoff_cap = std::chrono::milliseconds(
        field<long long>(r, "backoff_cap_ms", c.retry.backoff_cap.count(), "retry"));
  }

  auto path_of = [&](const char* key, const char* fallback) {
    const std::string v = field<std::string>(j, key, fallback, where);
    if (v.empty()) throw ConfigError(key, std::string("missing '") + key + "'");
    return resolve(base, v);
  };

  try {
    auto all = prompt::load_personas(path_of("personas_file", ""));
    if (j.contains("persona_ids")) {
      const auto wanted = field<std::vector<std::string>>(j, "persona_ids", {}, where);
      for (const auto& id : wanted) {
        auto it = std::find_if(all.begin(), all.end(), [&](const Persona& p) { return p.id == id; });
        if (it == all.end()) throw ConfigError("persona_ids", "unknown persona id " + id);
        c.personas.push_back(*it);
      }
    } else {
      c.personas = all;
    }
    if (j.contains("persona_limit")) {
      const int limit = field<int>(j, "persona_limit", 0, where);
      if (limit < 1) throw ConfigError("persona_limit", "persona_limit must be >= 1");
      if (c.personas.size() > static_cast<std::size_t>(limit)) c.personas.resize(limit);
    }
    c.pool = prompt::load_environment_pool(path_of("environments_file", ""));
    c.tasks = prompt::load_task_specs(path_of("tasks_dir", ""), path_of("rubrics_dir", ""));
    c.prompts = prompt::PromptKit::load(path_of("prompts_dir", ""));
  } catch (const prompt::PromptError& e) {
    throw ConfigError(e.subject(), e.what());
  } catch (const DomainError& e) {
    throw ConfigError("assets", e.what());
  }
  if (j.contains("refusal_patterns_file")) {
    const fs::path p = path_of("refusal_patterns_file", "");
    if (!fs::exists(p)) throw ConfigError("refusal_patterns_file", "cannot read " + p.string());
    c.refusal = parsing::RefusalDetector::from_file(p);
  }

  if (need_reasoner || j.contains("reasoner")) {
    if (!j.contains("reasoner")) throw ConfigError("reasoner", "missing 'reasoner' profile");
    c.reasoner = profile_from_json(j.at("reasoner"), base, kReasonerDefaults, "reasoner");
  }
  if (!j.contains("agent")) throw ConfigError("agent", "missing 'agent' profile");
  c.agent = profile_from_json(j.at("agent"), base, kAgentDefaults, "agent");
  c.evaluators = profiles_from(j, "evaluators", base, kEvaluatorDefaults, "evaluator");
  return c;
}

}  // namespace

BenchmarkConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config", "config must be a JSON object");
  reject_unknown(j, kConfigFields, "config");
  BenchmarkConfig c = parse_common(j, base_dir, true);
  validate(c);
  return c;
}

BenchmarkConfig load_config(const fs::path& path) {
  return config_from_json(read_json_file(path, "config"), path.parent_path());
}

GridConfig grid_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config", "grid config must be a JSON object");
  auto allowed = kConfigFields;
  allowed.insert("generators");
  reject_unknown(j, allowed, "grid config");
  GridConfig g;
  g.base = parse_common(j, base_dir, false);
  g.generators = profiles_from(j, "generators", base_dir, kReasonerDefaults, "generator");
  g.evaluators = g.base.evaluators;
  if (g.generators.empty()) throw ConfigError("generators", "grid needs at least one generator");
  if (g.evaluators.empty()) throw ConfigError("evaluators", "grid needs at least one evaluator");
  // Every cell must itself be a valid benchmark.
  for (std::size_t gi = 0; gi < g.generators.size(); ++gi) {
    for (std::size_t ei = 0; ei < g.evaluators.size(); ++ei) validate(grid_cell(g, gi, ei));
  }
  return g;
}

GridConfig load_grid_config(const fs::path& path) {
  return grid_from_json(read_json_file(path, "grid config"), path.parent_path());
}

BenchmarkConfig grid_cell(const GridConfig& grid, std::size_t generator, std::size_t evaluator) {
  BenchmarkConfig c = grid.base;
  c.reasoner = grid.generators.at(generator);
  c.evaluators = {grid.evaluators.at(evaluator)};
  c.run_id = grid.base.run_id + "-" + c.reasoner.name + "-" + c.evaluators[0].name;
  return c;
}

}  // namespace pbench::pipeline
