#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pbench {

/// The five evaluation tasks. Declaration order is the column order used in
/// every report (Action Justification first, Toxicity Control last).
enum class TaskKind {
  ActionJustification,
  ExpectedAction,
  LinguisticHabits,
  PersonaConsistency,
  ToxicityControl,
};

inline constexpr std::array<TaskKind, 5> kAllTasks = {
    TaskKind::ActionJustification, TaskKind::ExpectedAction,
    TaskKind::LinguisticHabits,    TaskKind::PersonaConsistency,
    TaskKind::ToxicityControl,
};

/// Identifier form, e.g. "ExpectedAction". Used in JSON and event logs.
std::string_view to_string(TaskKind kind);
/// Human form, e.g. "Expected Action". Bound into question-generation prompts.
std::string_view display_name(TaskKind kind);
/// Column header used in tables, e.g. "Action Just.".
std::string_view column_label(TaskKind kind);
/// File stem, e.g. "expected_action".
std::string_view slug(TaskKind kind);
std::optional<TaskKind> parse_task_kind(std::string_view text);

class DomainError : public std::runtime_error {
 public:
  enum class Code { MixedQuestion, Empty, MissingTask, InvalidValue };

  DomainError(Code code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Code code() const { return code_; }

 private:
  Code code_;
};

struct Persona {
  std::string id;
  std::string description;

  bool operator==(const Persona&) const = default;
};

/// Ordered, duplicate-free list of environment names.
class EnvironmentPool {
 public:
  EnvironmentPool() = default;
  /// Throws DomainError(InvalidValue) on empty or duplicate names. Duplicates
  /// are detected after trimming and case folding.
  explicit EnvironmentPool(std::vector<std::string> entries);

  const std::vector<std::string>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Exact match after whitespace trimming and ASCII case folding. Returns
  /// the canonical pool spelling.
  std::optional<std::string> find(std::string_view name) const;

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::string normalize_environment_name(std::string_view name);

struct SelectedEnvironments {
  std::string persona_id;
  std::vector<std::string> names;

  bool operator==(const SelectedEnvironments&) const = default;
};

struct RubricOutline {
  TaskKind kind = TaskKind::ExpectedAction;
  std::string text;

  bool operator==(const RubricOutline&) const = default;
};

struct TaskSpec {
  TaskKind kind = TaskKind::ExpectedAction;
  std::string name;
  std::string task_description;
  std::string question_quality_criteria;
  RubricOutline rubric_outline;
  // field name -> "published" | "reconstructed"
  std::map<std::string, std::string> provenance;

  bool operator==(const TaskSpec&) const = default;
};

/// Identifies one question slot of one persona/task.
struct ItemKey {
  std::string persona_id;
  TaskKind task = TaskKind::ExpectedAction;
  int index = 0;

  auto operator<=>(const ItemKey&) const = default;
  bool operator==(const ItemKey&) const = default;

  /// "<persona>/<Task>/<index>", also used as the question id.
  std::string str() const;
  /// Inverse of str(); throws DomainError on a malformed key.
  static ItemKey parse(std::string_view key);
};

struct Question {
  std::string id;
  std::string persona_id;
  TaskKind task = TaskKind::ExpectedAction;
  int index = 0;
  std::string text;
  std::vector<std::string> environments;

  ItemKey key() const { return {persona_id, task, index}; }
  bool operator==(const Question&) const = default;
};

struct AgentResponse {
  std::string question_id;
  std::string text;
  bool refusal = false;

  bool operator==(const AgentResponse&) const = default;
};

struct ScoreExampleSet {
  std::string question_id;
  std::map<int, std::string> examples;  // score (1..5) -> example response

  /// Checks all five keys, non-empty texts, pairwise distinct.
  /// Returns a description of the first problem, or nullopt when valid.
  std::optional<std::string> problem() const;
  bool operator==(const ScoreExampleSet&) const = default;
};

struct CompletedRubric {
  std::string question_id;
  std::string text;

  bool operator==(const CompletedRubric&) const = default;
};

struct EvaluationRecord {
  std::string question_id;
  std::string evaluator_id;
  std::string raw_justification;
  int score = 0;

  bool operator==(const EvaluationRecord&) const = default;
};

/// Mean of n judge scores, held exactly as sum / n.
struct EnsembleScore {
  std::string question_id;
  int score_sum = 0;
  int evaluator_count = 0;

  double value() const {
    return static_cast<double>(score_sum) / static_cast<double>(evaluator_count);
  }
  bool operator==(const EnsembleScore&) const = default;
};

struct TaskSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;

  bool operator==(const TaskSummary&) const = default;
};

/// persona id -> task -> ensemble scores ordered by question index.
struct ScoreMatrix {
  std::map<std::string, std::map<TaskKind, std::vector<EnsembleScore>>> entries;

  std::size_t total() const;
  bool operator==(const ScoreMatrix&) const = default;
};

struct PersonaScoreReport {
  std::string persona_id;
  std::map<TaskKind, TaskSummary> tasks;
  std::optional<double> persona_score;
  int refusal_count = 0;
  int completed_items = 0;
  int expected_items = 0;

  bool complete() const {
    return expected_items > 0 && completed_items == expected_items;
  }
  bool operator==(const PersonaScoreReport&) const = default;
};

}  // namespace pbench
