#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbench/core/types.hpp"
#include "pbench/gateway/gateway.hpp"
#include "pbench/parsing/parsers.hpp"
#include "pbench/prompt/prompt_kit.hpp"

namespace pbench::pipeline {

/// Invalid or unreadable configuration. `subject` names the offending
/// field, file or provider profile.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string subject, const std::string& message)
      : std::runtime_error(message), subject_(std::move(subject)) {}
  const std::string& subject() const { return subject_; }

 private:
  std::string subject_;
};

struct BenchmarkConfig {
  std::string run_id;
  std::filesystem::path runs_root = "runs";
  std::filesystem::path cache_dir;  // empty disables the response cache

  std::vector<Persona> personas;
  EnvironmentPool pool;
  std::vector<TaskSpec> tasks;  // one per TaskKind, in column order
  prompt::PromptKit prompts;
  parsing::RefusalDetector refusal = parsing::RefusalDetector::defaults();

  gateway::ProviderProfile reasoner;  // environments, questions, exemplars
  gateway::ProviderProfile agent;     // model under test
  std::vector<gateway::ProviderProfile> evaluators;

  int questions_per_task = 10;
  int concurrency = 4;
  int parse_retries = 2;  // extra attempts after a malformed output
  gateway::RetryPolicy retry;
  /// Stamp every event with a constant time so logs are byte-reproducible.
  bool fixed_timestamps = false;

  std::filesystem::path run_dir() const { return runs_root / run_id; }
  const TaskSpec& task(TaskKind kind) const;
};

/// Throws ConfigError when: no personas or duplicate ids; an empty pool;
/// tasks not exactly the five kinds; questions_per_task < 1; concurrency
/// < 1; parse_retries < 0; no evaluators or duplicate evaluator names; an
/// invalid profile; or an evaluator whose model id equals the agent's.
void validate(const BenchmarkConfig& config);

/// SHA-256 over everything that determines the run's results: personas,
/// pool, tasks, prompt templates, refusal patterns, profiles (including mock
/// scripts), questions_per_task and parse_retries. Output locations and
/// concurrency are excluded so a run can be resumed with different ones.
std::string config_digest(const BenchmarkConfig& config);

/// Profile from JSON:
///   {"name", "endpoint", "model", "api_key_env", "temperature", "top_p",
///    "max_tokens", "requests_per_minute", "script"}
/// `script` (mock endpoints only) is a path relative to `base_dir` or an
/// inline rule array. Missing sampling fields take `defaults`.
gateway::ProviderProfile profile_from_json(const nlohmann::json& j,
                                           const std::filesystem::path& base_dir,
                                           const gateway::SamplingParams& defaults,
                                           const std::string& role);

/// Parses a benchmark config document. Input file paths resolve against
/// `base_dir`; runs_root and cache_dir resolve against the working
/// directory. Validates before returning.
BenchmarkConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
BenchmarkConfig load_config(const std::filesystem::path& path);

/// Robustness grid: every generator x evaluator pair runs the pipeline with
/// that generator as reasoner and that evaluator as the sole judge.
struct GridConfig {
  BenchmarkConfig base;
  std::vector<gateway::ProviderProfile> generators;
  std::vector<gateway::ProviderProfile> evaluators;
};

/// Same document as a benchmark config plus "generators" and the
/// "evaluators" list reused as grid columns; "reasoner" may be omitted.
GridConfig grid_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
GridConfig load_grid_config(const std::filesystem::path& path);

/// The benchmark config for one grid cell; its run id is
/// "<base run id>-<generator>-<evaluator>".
BenchmarkConfig grid_cell(const GridConfig& grid, std::size_t generator, std::size_t evaluator);

}  // namespace pbench::pipeline
