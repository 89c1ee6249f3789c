#pragma once

#include <map>
#include <span>

#include "pbench/core/types.hpp"

namespace pbench {

/// Arithmetic mean of the judges' scores for one question.
/// Throws DomainError(Empty) on an empty list and DomainError(MixedQuestion)
/// when the records do not share one question id.
EnsembleScore ensemble(std::span<const EvaluationRecord> records);

/// Mean and population standard deviation (divide by N) of ensemble scores.
/// When every score has the same ensemble size the moments are computed in
/// integer arithmetic, so the mean is exact up to the final division.
TaskSummary summarize_task(std::span<const EnsembleScore> scores);

/// Mean and population standard deviation of plain values.
TaskSummary summarize_values(std::span<const double> values);

/// Unweighted mean of the five task means.
/// Throws DomainError(MissingTask) unless all five tasks are present.
double persona_score(const std::map<TaskKind, double>& task_means);

}  // namespace pbench
