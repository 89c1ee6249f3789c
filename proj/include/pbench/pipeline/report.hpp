#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbench/core/types.hpp"
#include "pbench/pipeline/config.hpp"
#include "pbench/pipeline/pipeline.hpp"
#include "pbench/store/run_store.hpp"

namespace pbench::pipeline {

class ReportError : public std::runtime_error {
 public:
  enum class Code { EmptyRun };
  ReportError(Code code, const std::string& message) : std::runtime_error(message), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// One model (one run) as a table row, derived from the run log alone.
struct ModelReport {
  std::string run_id;
  std::string model;  // agent profile name
  std::vector<PersonaScoreReport> personas;
  /// Mean and population std over the personas' task means.
  std::map<TaskKind, TaskSummary> tasks;
  /// Mean and population std over the persona scores of personas with all
  /// five tasks; empty when there are none.
  std::optional<TaskSummary> persona_score;
  int refusals = 0;
  int completed_items = 0;
  int expected_items = 0;
  /// "<key> [<stage>] <code>: <message>" per failed (or pending) unit.
  std::vector<std::string> failures;
  ScoreMatrix matrix;

  bool complete() const { return expected_items > 0 && completed_items == expected_items; }
};

/// Ensemble scores by persona, task and question index.
ScoreMatrix score_matrix(const store::RunLog& log);

/// Throws ReportError(EmptyRun) when the log holds no ensemble scores.
ModelReport build_report(const store::RunLog& log);

/// Fixed-point with round-half-up at `decimals` places.
std::string format_fixed(double value, int decimals = 2);

/// Per column (five tasks then PersonaScore), which rows hold the best
/// displayed mean. Ties on the rounded value are all marked.
std::vector<std::vector<bool>> best_marks(std::span<const ModelReport> models);

/// Score table ("mean (std)", best marked with '*'), refusal table,
/// completeness and failures.
std::string render_text(std::span<const ModelReport> models);
std::string render_csv(std::span<const ModelReport> models);

struct GridCell {
  std::string generator;
  std::string evaluator;
  std::string run_id;
  std::optional<double> persona_score;
  bool complete = false;
};

struct GridResult {
  std::vector<std::string> generators;
  std::vector<std::string> evaluators;
  std::vector<GridCell> cells;  // generator-major
  /// Largest difference between two cell values; empty without values.
  std::optional<double> spread;
};

/// Runs every generator x evaluator cell and collects model-level
/// PersonaScores.
GridResult run_grid(const GridConfig& grid, const RunOptions& options = {});
std::string render_grid(const GridResult& result);

}  // namespace pbench::pipeline
