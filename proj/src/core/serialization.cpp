#include "pbench/core/serialization.hpp"

namespace pbench {

namespace {

void expect_kind(const json& j, std::string_view kind) {
  const auto& actual = j.at("kind").get_ref<const std::string&>();
  if (actual != kind) {
    throw DomainError(DomainError::Code::InvalidValue,
                      "expected record kind '" + std::string(kind) + "', got '" + actual +
                          "'");
  }
}

}  // namespace

void to_json(json& j, TaskKind kind) { j = std::string(to_string(kind)); }

void from_json(const json& j, TaskKind& kind) {
  auto parsed = parse_task_kind(j.get<std::string>());
  if (!parsed) {
    throw DomainError(DomainError::Code::InvalidValue,
                      "unknown task kind: " + j.get<std::string>());
  }
  kind = *parsed;
}

void to_json(json& j, const Persona& v) {
  j = {{"kind", "persona"}, {"id", v.id}, {"description", v.description}};
}

void from_json(const json& j, Persona& v) {
  expect_kind(j, "persona");
  v.id = j.at("id").get<std::string>();
  v.description = j.at("description").get<std::string>();
}

void to_json(json& j, const EnvironmentPool& v) {
  j = {{"kind", "environment_pool"}, {"entries", v.entries()}};
}

void from_json(const json& j, EnvironmentPool& v) {
  expect_kind(j, "environment_pool");
  v = EnvironmentPool(j.at("entries").get<std::vector<std::string>>());
}

void to_json(json& j, const SelectedEnvironments& v) {
  j = {{"kind", "selected_environments"}, {"persona_id", v.persona_id}, {"names", v.names}};
}

void from_json(const json& j, SelectedEnvironments& v) {
  expect_kind(j, "selected_environments");
  v.persona_id = j.at("persona_id").get<std::string>();
  v.names = j.at("names").get<std::vector<std::string>>();
}

void to_json(json& j, const RubricOutline& v) {
  j = {{"kind", "rubric_outline"}, {"task", v.kind}, {"text", v.text}};
}

void from_json(const json& j, RubricOutline& v) {
  expect_kind(j, "rubric_outline");
  v.kind = j.at("task").get<TaskKind>();
  v.text = j.at("text").get<std::string>();
}

void to_json(json& j, const TaskSpec& v) {
  j = {{"kind", "task_spec"},
       {"task", v.kind},
       {"name", v.name},
       {"task_description", v.task_description},
       {"question_quality_criteria", v.question_quality_criteria},
       {"rubric_outline", v.rubric_outline},
       {"provenance", v.provenance}};
}

void from_json(const json& j, TaskSpec& v) {
  expect_kind(j, "task_spec");
  v.kind = j.at("task").get<TaskKind>();
  v.name = j.at("name").get<std::string>();
  v.task_description = j.at("task_description").get<std::string>();
  v.question_quality_criteria = j.at("question_quality_criteria").get<std::string>();
  v.rubric_outline = j.at("rubric_outline").get<RubricOutline>();
  v.provenance = j.value("provenance", std::map<std::string, std::string>{});
}

void to_json(json& j, const Question& v) {
  j = {{"kind", "question"},   {"id", v.id},     {"persona_id", v.persona_id},
       {"task", v.task},       {"index", v.index}, {"text", v.text},
       {"environments", v.environments}};
}

void from_json(const json& j, Question& v) {
  expect_kind(j, "question");
  v.id = j.at("id").get<std::string>();
  v.persona_id = j.at("persona_id").get<std::string>();
  v.task = j.at("task").get<TaskKind>();
  v.index = j.at("index").get<int>();
  v.text = j.at("text").get<std::string>();
  v.environments = j.at("environments").get<std::vector<std::string>>();
}

void to_json(json& j, const AgentResponse& v) {
  j = {{"kind", "agent_response"},
       {"question_id", v.question_id},
       {"text", v.text},
       {"refusal", v.refusal}};
}

void from_json(const json& j, AgentResponse& v) {
  expect_kind(j, "agent_response");
  v.question_id = j.at("question_id").get<std::string>();
  v.text = j.at("text").get<std::string>();
  v.refusal = j.at("refusal").get<bool>();
}

void to_json(json& j, const ScoreExampleSet& v) {
  json examples = json::object();
  for (const auto& [score, text] : v.examples) examples[std::to_string(score)] = text;
  j = {{"kind", "score_example_set"}, {"question_id", v.question_id}, {"examples", examples}};
}

void from_json(const json& j, ScoreExampleSet& v) {
  expect_kind(j, "score_example_set");
  v.question_id = j.at("question_id").get<std::string>();
  v.examples.clear();
  for (const auto& [key, text] : j.at("examples").items()) {
    v.examples[std::stoi(key)] = text.get<std::string>();
  }
}

void to_json(json& j, const CompletedRubric& v) {
  j = {{"kind", "completed_rubric"}, {"question_id", v.question_id}, {"text", v.text}};
}

void from_json(const json& j, CompletedRubric& v) {
  expect_kind(j, "completed_rubric");
  v.question_id = j.at("question_id").get<std::string>();
  v.text = j.at("text").get<std::string>();
}

void to_json(json& j, const EvaluationRecord& v) {
  j = {{"kind", "evaluation_record"},
       {"question_id", v.question_id},
       {"evaluator_id", v.evaluator_id},
       {"raw_justification", v.raw_justification},
       {"score", v.score}};
}

void from_json(const json& j, EvaluationRecord& v) {
  expect_kind(j, "evaluation_record");
  v.question_id = j.at("question_id").get<std::string>();
  v.evaluator_id = j.at("evaluator_id").get<std::string>();
  v.raw_justification = j.at("raw_justification").get<std::string>();
  v.score = j.at("score").get<int>();
}

void to_json(json& j, const EnsembleScore& v) {
  j = {{"kind", "ensemble_score"},
       {"question_id", v.question_id},
       {"score_sum", v.score_sum},
       {"evaluator_count", v.evaluator_count},
       {"value", v.value()}};
}

void from_json(const json& j, EnsembleScore& v) {
  expect_kind(j, "ensemble_score");
  v.question_id = j.at("question_id").get<std::string>();
  v.score_sum = j.at("score_sum").get<int>();
  v.evaluator_count = j.at("evaluator_count").get<int>();
  if (v.evaluator_count < 1) {
    throw DomainError(DomainError::Code::InvalidValue, "ensemble with zero evaluators");
  }
}

void to_json(json& j, const TaskSummary& v) {
  j = {{"kind", "task_summary"}, {"mean", v.mean}, {"std", v.std}, {"count", v.count}};
}

void from_json(const json& j, TaskSummary& v) {
  expect_kind(j, "task_summary");
  v.mean = j.at("mean").get<double>();
  v.std = j.at("std").get<double>();
  v.count = j.at("count").get<std::size_t>();
}

void to_json(json& j, const ScoreMatrix& v) {
  json entries = json::object();
  for (const auto& [persona, tasks] : v.entries) {
    json per_task = json::object();
    for (const auto& [task, scores] : tasks) per_task[std::string(to_string(task))] = scores;
    entries[persona] = per_task;
  }
  j = {{"kind", "score_matrix"}, {"entries", entries}};
}

void from_json(const json& j, ScoreMatrix& v) {
  expect_kind(j, "score_matrix");
  v.entries.clear();
  for (const auto& [persona, tasks] : j.at("entries").items()) {
    auto& slot = v.entries[persona];
    for (const auto& [task, scores] : tasks.items()) {
      slot[json(task).get<TaskKind>()] = scores.get<std::vector<EnsembleScore>>();
    }
  }
}

void to_json(json& j, const PersonaScoreReport& v) {
  json tasks = json::object();
  for (const auto& [task, summary] : v.tasks) tasks[std::string(to_string(task))] = summary;
  j = {{"kind", "persona_score_report"},
       {"persona_id", v.persona_id},
       {"tasks", tasks},
       {"persona_score", v.persona_score ? json(*v.persona_score) : json(nullptr)},
       {"refusal_count", v.refusal_count},
       {"completed_items", v.completed_items},
       {"expected_items", v.expected_items}};
}

void from_json(const json& j, PersonaScoreReport& v) {
  expect_kind(j, "persona_score_report");
  v.persona_id = j.at("persona_id").get<std::string>();
  v.tasks.clear();
  for (const auto& [task, summary] : j.at("tasks").items()) {
    v.tasks[json(task).get<TaskKind>()] = summary.get<TaskSummary>();
  }
  const auto& score = j.at("persona_score");
  v.persona_score = score.is_null() ? std::nullopt : std::optional<double>(score.get<double>());
  v.refusal_count = j.at("refusal_count").get<int>();
  v.completed_items = j.at("completed_items").get<int>();
  v.expected_items = j.at("expected_items").get<int>();
}

}  // namespace pbench
