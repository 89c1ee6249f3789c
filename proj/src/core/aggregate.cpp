#include "pbench/core/aggregate.hpp"

#include <cmath>
#include <cstdint>

namespace pbench {

EnsembleScore ensemble(std::span<const EvaluationRecord> records) {
  if (records.empty()) {
    throw DomainError(DomainError::Code::Empty, "ensemble of zero evaluation records");
  }
  EnsembleScore out;
  out.question_id = records.front().question_id;
  for (const auto& r : records) {
    if (r.question_id != out.question_id) {
      throw DomainError(DomainError::Code::MixedQuestion,
                        "ensemble mixes questions " + out.question_id + " and " +
                            r.question_id);
    }
    if (r.score < 1 || r.score > 5) {
      throw DomainError(DomainError::Code::InvalidValue,
                        "judge score " + std::to_string(r.score) + " outside 1..5");
    }
    out.score_sum += r.score;
  }
  out.evaluator_count = static_cast<int>(records.size());
  return out;
}

TaskSummary summarize_task(std::span<const EnsembleScore> scores) {
  if (scores.empty()) {
    throw DomainError(DomainError::Code::Empty, "summary of zero scores");
  }
  const int n = scores.front().evaluator_count;
  bool common = n > 0;
  for (const auto& s : scores) common = common && s.evaluator_count == n;

  if (!common) {
    std::vector<double> values;
    values.reserve(scores.size());
    for (const auto& s : scores) values.push_back(s.value());
    return summarize_values(values);
  }

  std::int64_t sum = 0;
  std::int64_t sum_sq = 0;
  for (const auto& s : scores) {
    sum += s.score_sum;
    sum_sq += static_cast<std::int64_t>(s.score_sum) * s.score_sum;
  }
  const auto count = static_cast<std::int64_t>(scores.size());
  const double scale = static_cast<double>(count) * n;
  TaskSummary out;
  out.count = scores.size();
  out.mean = static_cast<double>(sum) / scale;
  // N * sum(s^2) - (sum s)^2 >= 0 by Cauchy-Schwarz, computed exactly.
  const std::int64_t spread = count * sum_sq - sum * sum;
  out.std = std::sqrt(static_cast<double>(spread)) / scale;
  return out;
}

TaskSummary summarize_values(std::span<const double> values) {
  if (values.empty()) {
    throw DomainError(DomainError::Code::Empty, "summary of zero values");
  }
  long double sum = 0;
  for (double v : values) sum += v;
  const long double mean = sum / static_cast<long double>(values.size());
  long double sq = 0;
  for (double v : values) sq += (v - mean) * (v - mean);
  TaskSummary out;
  out.count = values.size();
  out.mean = static_cast<double>(mean);
  out.std = static_cast<double>(std::sqrt(sq / static_cast<long double>(values.size())));
  return out;
}

double persona_score(const std::map<TaskKind, double>& task_means) {
  double total = 0.0;
  for (TaskKind kind : kAllTasks) {
    auto it = task_means.find(kind);
    if (it == task_means.end()) {
      throw DomainError(DomainError::Code::MissingTask,
                        "persona score needs a mean for " + std::string(to_string(kind)));
    }
    total += it->second;
  }
  return total / static_cast<double>(kAllTasks.size());
}

}  // namespace pbench
