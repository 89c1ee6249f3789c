#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbench/gateway/cache.hpp"
#include "pbench/gateway/gateway.hpp"
#include "pbench/parsing/parsers.hpp"
#include "pbench/pipeline/config.hpp"
#include "pbench/store/run_store.hpp"

namespace pbench::pipeline {

/// A stage that could not produce its output. `transient` failures (the
/// provider was unreachable, rate limited, ...) are retried when the run is
/// resumed; the others are final for the item.
class StageError : public std::runtime_error {
 public:
  enum class Code { EnvironmentNotInPool, WrongCount, Parse, EmptyResponse, Gateway };

  StageError(Code code, std::string key, const std::string& message, bool transient = false,
             std::optional<parsing::Reason> reason = std::nullopt)
      : std::runtime_error(message),
        code_(code),
        key_(std::move(key)),
        transient_(transient),
        reason_(reason) {}

  Code code() const { return code_; }
  const std::string& key() const { return key_; }
  bool transient() const { return transient_; }
  std::optional<parsing::Reason> reason() const { return reason_; }

 private:
  Code code_;
  std::string key_;
  bool transient_;
  std::optional<parsing::Reason> reason_;
};

std::string_view to_string(StageError::Code code);

/// Collects the events of one unit of work. Units are committed to the run
/// log in a fixed order, so the log does not depend on thread scheduling.
using EventSink = std::vector<store::StageEvent>;

/// The five pipeline operations for one configuration. Each records its
/// attempts (malformed outputs included) into the given sink.
class Stages {
 public:
  Stages(const BenchmarkConfig& config, gateway::Gateway& gateway,
         gateway::ResponseCache* cache = nullptr);

  SelectedEnvironments select_environments(const Persona& persona, EventSink& events);
  std::vector<Question> generate_questions(const Persona& persona,
                                           const SelectedEnvironments& envs, TaskKind task,
                                           EventSink& events);
  AgentResponse answer_question(const Persona& persona, const Question& question,
                                EventSink& events);
  ScoreExampleSet generate_exemplars(const Persona& persona, const Question& question,
                                     EventSink& events);
  /// One record per evaluator, in configuration order, plus their ensemble.
  std::pair<std::vector<EvaluationRecord>, EnsembleScore> evaluate_response(
      const CompletedRubric& rubric, EventSink& events,
      const std::map<std::string, EvaluationRecord>& already_judged = {});

  gateway::ChatResponse call(const gateway::ChatRequest& request,
                             const gateway::ProviderProfile& profile, const std::string& key);

 private:
  // Sends `request` up to 1 + parse_retries times, appending the malformed
  // suffix on retries; `parse` throws ParseError or StageError on bad output.
  template <typename T>
  T with_parse_retries(const char* stage_name, const std::string& key,
                       const gateway::ChatRequest& request,
                       const gateway::ProviderProfile& profile,
                       const std::function<T(const std::string&)>& parse, EventSink& events);

  const BenchmarkConfig& config_;
  gateway::Gateway& gateway_;
  gateway::ResponseCache* cache_;
};

struct RunOptions {
  bool resume = false;
  /// Discard an existing run directory instead of refusing to start.
  bool overwrite = false;
  /// Progress lines (one per phase); null for silence.
  std::ostream* progress = nullptr;
  /// Passed to RunLog::set_after_append; used to simulate crashes.
  std::function<void(std::size_t)> after_append;
  gateway::GatewayOptions gateway;
};

struct RunOutcome {
  std::filesystem::path run_dir;
  bool complete = false;
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
  std::map<std::string, std::size_t> calls_by_profile;
};

/// Raised when a provider rejects the configured credentials or the
/// configuration is otherwise unusable mid-run.
class FatalRunError : public std::runtime_error {
 public:
  FatalRunError(std::string provider, const std::string& message)
      : std::runtime_error(message), provider_(std::move(provider)) {}
  const std::string& provider() const { return provider_; }

 private:
  std::string provider_;
};

/// Runs (or resumes) every persona: environment selection, then per task
/// question generation, then per question answer, exemplars, rubric and
/// judges. Work fans out under config.concurrency; events are committed in
/// persona/task/question order. Items already terminal in the log are not
/// recomputed, and neither is any individual stage output already logged.
RunOutcome run_benchmark(const BenchmarkConfig& config, const RunOptions& options = {});

/// Metadata stored in the manifest so reports need only the run directory.
nlohmann::json run_metadata(const BenchmarkConfig& config);

/// Runs `fn(0..n-1)` on up to `workers` threads. The first exception is
/// rethrown after all threads finish; remaining indices are skipped.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace pbench::pipeline
