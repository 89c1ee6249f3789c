#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pbench::stats {

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Machine and human scores aligned by item key.
struct PairedScores {
  std::vector<std::string> keys;
  std::vector<double> machine;
  std::vector<double> human;

  std::size_t size() const { return keys.size(); }
  /// Throws StatsError unless lengths agree, keys are unique and size >= 2.
  void validate() const;
};

/// A correlation in closed form: value = numerator / sqrt(var_x * var_y).
/// Both factors are positive integers, so callers can compare exactly.
struct Correlation {
  double value = 0.0;
  __int128 numerator = 0;
  __int128 var_x = 0;
  __int128 var_y = 0;
};

/// Spearman's rho: Pearson correlation of average (fractional) ranks.
/// nullopt when either side is constant (DegenerateConstantVector).
std::optional<Correlation> spearman(const PairedScores& paired);
std::optional<Correlation> spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Kendall's tau-b by exhaustive pair classification:
/// (nc - nd) / sqrt((n0 - n1)(n0 - n2)). nullopt when either side is constant.
std::optional<Correlation> kendall_tau(const PairedScores& paired);
std::optional<Correlation> kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

/// Items x categories count matrix; every row sums to the rater count.
struct AnnotationTable {
  std::vector<std::vector<int>> counts;

  std::size_t items() const { return counts.size(); }
  std::size_t categories() const { return counts.empty() ? 0 : counts.front().size(); }
  /// Rater count (row sum of the first row).
  int raters() const;
  /// Throws StatsError unless non-empty, rectangular, counts >= 0 and every
  /// row sums to the same n >= 2.
  void validate() const;
};

/// kappa = numerator / denominator exactly.
struct Kappa {
  double value = 0.0;
  __int128 numerator = 0;
  __int128 denominator = 0;
};

/// Fleiss' kappa. nullopt when expected chance agreement is 1
/// (PerfectChanceAgreement: a single category used throughout).
std::optional<Kappa> fleiss_kappa(const AnnotationTable& table);

/// "83.6% / 76.1%": both values as percentages with one decimal, rounded
/// half away from zero.
std::string format_correlation_cell(double rho, double tau);
std::string format_percent(double value);

}  // namespace pbench::stats
