#pragma once

// JSON records for the domain types. Every record carries a `kind`
// discriminator so heterogeneous records can share one JSON-lines stream.

#include <json.hpp>
#include <string>

#include "pbench/core/types.hpp"

namespace pbench {

using json = nlohmann::json;

void to_json(json& j, TaskKind kind);
void from_json(const json& j, TaskKind& kind);

void to_json(json& j, const Persona& v);
void from_json(const json& j, Persona& v);
void to_json(json& j, const EnvironmentPool& v);
void from_json(const json& j, EnvironmentPool& v);
void to_json(json& j, const SelectedEnvironments& v);
void from_json(const json& j, SelectedEnvironments& v);
void to_json(json& j, const RubricOutline& v);
void from_json(const json& j, RubricOutline& v);
void to_json(json& j, const TaskSpec& v);
void from_json(const json& j, TaskSpec& v);
void to_json(json& j, const Question& v);
void from_json(const json& j, Question& v);
void to_json(json& j, const AgentResponse& v);
void from_json(const json& j, AgentResponse& v);
void to_json(json& j, const ScoreExampleSet& v);
void from_json(const json& j, ScoreExampleSet& v);
void to_json(json& j, const CompletedRubric& v);
void from_json(const json& j, CompletedRubric& v);
void to_json(json& j, const EvaluationRecord& v);
void from_json(const json& j, EvaluationRecord& v);
void to_json(json& j, const EnsembleScore& v);
void from_json(const json& j, EnsembleScore& v);
void to_json(json& j, const TaskSummary& v);
void from_json(const json& j, TaskSummary& v);
void to_json(json& j, const ScoreMatrix& v);
void from_json(const json& j, ScoreMatrix& v);
void to_json(json& j, const PersonaScoreReport& v);
void from_json(const json& j, PersonaScoreReport& v);

/// One compact JSON object, no trailing newline.
template <typename T>
std::string to_json_line(const T& value) {
  return json(value).dump();
}

template <typename T>
T from_json_line(const std::string& line) {
  return json::parse(line).get<T>();
}

}  // namespace pbench
