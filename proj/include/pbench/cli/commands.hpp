#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pbench/pipeline/pipeline.hpp"
#include "pbench/stats/stats.hpp"
#include "pbench/store/run_store.hpp"

namespace pbench::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,        // unexpected error
  kConfigError = 2,    // bad config, credentials or run directory state
  kPartial = 3,        // run finished with items missing
  kEmptyRun = 4,       // nothing to report
  kNoAnnotations = 5,  // correlate without human scores
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

struct RunFlags {
  bool resume = false;
  bool overwrite = false;
  bool quiet = false;
};

/// Runs the benchmark and prints the summary table.
int cmd_run(const std::filesystem::path& config, const RunFlags& flags, Streams io,
            pipeline::RunOptions options = {});

/// Score table, refusals, completeness and failures for one or more runs
/// (one row per run); CSV instead of text when `csv` is set.
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, bool csv, Streams io);

enum class CorrelationMode { Pooled, PerPersona };

struct CorrelationCell {
  std::optional<double> rho;
  std::optional<double> tau;
  std::size_t items = 0;  // pairs used (pooled) or personas averaged (per persona)
};

struct CorrelationRow {
  std::string model;
  std::map<TaskKind, CorrelationCell> tasks;
  /// Per-persona mean machine score against mean human score, over
  /// personas with annotated items in all five tasks.
  CorrelationCell persona_score;
  int annotators = 0;
  std::size_t agreement_items = 0;
  std::optional<stats::Kappa> kappa;
};

/// Machine ensemble scores against mean human scores of one run.
CorrelationRow correlate_run(const store::RunLog& log, const std::vector<store::HumanScoreSet>& sets,
                             CorrelationMode mode);
std::string render_correlations(const std::vector<CorrelationRow>& rows, CorrelationMode mode);

/// Human scores are read from `scores_dir` or, when empty, each run's
/// annotations directory.
int cmd_correlate(const std::vector<std::filesystem::path>& run_dirs,
                  const std::optional<std::filesystem::path>& scores_dir, CorrelationMode mode,
                  Streams io);

int cmd_grid(const std::filesystem::path& config, const RunFlags& flags, Streams io,
             pipeline::RunOptions options = {});

struct ExportFlags {
  std::size_t sample = 0;  // personas to sample; 0 for all
  std::uint64_t seed = 0;
  std::vector<TaskKind> tasks;  // empty for all
};

/// Samples personas by seed and writes the packet JSON and CSV.
int cmd_export(const std::filesystem::path& run_dir, const ExportFlags& flags, Streams io);

/// Removes unreadable cache entries.
int cmd_cache_repair(const std::filesystem::path& cache_dir, Streams io);

/// Loads a config and reports task-data authoring problems.
int cmd_check(const std::filesystem::path& config, Streams io);

}  // namespace pbench::cli
