#include "pbench/stats/stats.hpp"

#include <cmath>
#include <cstdio>
#include <set>

namespace pbench::stats {

namespace {

using i128 = __int128;

void check_lengths(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw StatsError("paired vectors differ in length");
  if (x.size() < 2) throw StatsError("correlation needs at least two pairs");
}

// Twice the average 1-based rank, which is always an integer. With `equal`
// counting the value itself: 2 * (less + (equal + 1) / 2).
std::vector<i128> doubled_ranks(const std::vector<double>& v) {
  std::vector<i128> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    i128 less = 0;
    i128 equal = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      if (w == v[i]) ++equal;
    }
    out[i] = 2 * less + equal + 1;  // `equal` includes v[i] itself
  }
  return out;
}

double closed_form(i128 num, i128 vx, i128 vy) {
  return static_cast<double>(static_cast<long double>(num) /
                             std::sqrt(static_cast<long double>(vx)) /
                             std::sqrt(static_cast<long double>(vy)));
}

}  // namespace

void PairedScores::validate() const {
  if (machine.size() != keys.size() || human.size() != keys.size()) {
    throw StatsError("paired scores: keys, machine and human lengths differ");
  }
  if (keys.size() < 2) throw StatsError("paired scores: need at least two items");
  std::set<std::string> seen(keys.begin(), keys.end());
  if (seen.size() != keys.size()) throw StatsError("paired scores: duplicate item key");
}

std::optional<Correlation> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  check_lengths(x, y);
  const auto rx = doubled_ranks(x);
  const auto ry = doubled_ranks(y);
  const i128 n = static_cast<i128>(x.size());
  i128 sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += rx[i];
    sy += ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
    sxy += rx[i] * ry[i];
  }
  Correlation c;
  c.numerator = n * sxy - sx * sy;
  c.var_x = n * sxx - sx * sx;
  c.var_y = n * syy - sy * sy;
  if (c.var_x == 0 || c.var_y == 0) return std::nullopt;
  c.value = closed_form(c.numerator, c.var_x, c.var_y);
  return c;
}

std::optional<Correlation> spearman(const PairedScores& paired) {
  paired.validate();
  return spearman(paired.machine, paired.human);
}

std::optional<Correlation> kendall_tau(const std::vector<double>& x,
                                       const std::vector<double>& y) {
  check_lengths(x, y);
  const std::size_t m = x.size();
  i128 concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const bool tx = x[i] == x[j];
      const bool ty = y[i] == y[j];
      if (tx) ++tied_x;
      if (ty) ++tied_y;
      if (tx || ty) continue;
      if ((x[i] < x[j]) == (y[i] < y[j])) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const i128 n0 = static_cast<i128>(m) * static_cast<i128>(m - 1) / 2;
  Correlation c;
  c.numerator = concordant - discordant;
  c.var_x = n0 - tied_x;
  c.var_y = n0 - tied_y;
  if (c.var_x == 0 || c.var_y == 0) return std::nullopt;
  c.value = closed_form(c.numerator, c.var_x, c.var_y);
  return c;
}

std::optional<Correlation> kendall_tau(const PairedScores& paired) {
  paired.validate();
  return kendall_tau(paired.machine, paired.human);
}

int AnnotationTable::raters() const {
  int n = 0;
  if (!counts.empty()) {
    for (int c : counts.front()) n += c;
  }
  return n;
}

void AnnotationTable::validate() const {
  if (counts.empty()) throw StatsError("annotation table has no items");
  const std::size_t k = counts.front().size();
  if (k == 0) throw StatsError("annotation table has no categories");
  const int n = raters();
  if (n < 2) throw StatsError("annotation table needs at least two raters per item");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != k) throw StatsError("annotation table is not rectangular");
    int sum = 0;
    for (int c : counts[i]) {
      if (c < 0) throw StatsError("negative count in annotation table");
      sum += c;
    }
    if (sum != n) {
      throw StatsError("annotation table row " + std::to_string(i) + " sums to " +
                       std::to_string(sum) + ", expected " + std::to_string(n));
    }
  }
}

std::optional<Kappa> fleiss_kappa(const AnnotationTable& table) {
  table.validate();
  const i128 items = static_cast<i128>(table.items());
  const i128 n = table.raters();
  const std::size_t k = table.categories();

  // P-bar = A / B and P-bar_e = C / D, all integers.
  i128 a = 0;
  std::vector<i128> column(k, 0);
  for (const auto& row : table.counts) {
    for (std::size_t j = 0; j < k; ++j) {
      a += static_cast<i128>(row[j]) * row[j];
      column[j] += row[j];
    }
  }
  a -= items * n;
  const i128 b = items * n * (n - 1);
  i128 c = 0;
  for (i128 cj : column) c += cj * cj;
  const i128 d = (items * n) * (items * n);
  if (c == d) return std::nullopt;

  Kappa kappa;
  kappa.numerator = a * d - c * b;
  kappa.denominator = b * (d - c);
  kappa.value = static_cast<double>(static_cast<long double>(kappa.numerator) /
                                    static_cast<long double>(kappa.denominator));
  return kappa;
}

std::string format_percent(double value) {
  // Tenths of a percent, half away from zero. The epsilon absorbs binary
  // representation error in inputs such as 0.8365.
  const double scaled = std::fabs(value) * 1000.0;
  const long long tenths = static_cast<long long>(std::floor(scaled + 0.5 + 1e-9));
  const bool negative = value < 0 && tenths != 0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%lld.%lld%%", negative ? "-" : "", tenths / 10, tenths % 10);
  return buf;
}

std::string format_correlation_cell(double rho, double tau) {
  return format_percent(rho) + " / " + format_percent(tau);
}

}  // namespace pbench::stats
