#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stats_oracles.hpp"

using namespace pbench::stats;

namespace {

std::vector<std::vector<int>> all_vectors(int length) {
  std::vector<std::vector<int>> out;
  std::vector<int> v(length, 1);
  while (true) {
    out.push_back(v);
    int i = length - 1;
    while (i >= 0 && v[i] == 5) v[i--] = 1;
    if (i < 0) break;
    ++v[i];
  }
  return out;
}

void expect_matches_oracles(const std::vector<int>& x, const std::vector<int>& y) {
  auto xs = oracle::as_doubles(x);
  auto ys = oracle::as_doubles(y);
  auto rho = spearman(xs, ys);
  auto rho_oracle = oracle::spearman(x, y);
  ASSERT_EQ(rho.has_value(), rho_oracle.has_value());
  if (rho) {
    ASSERT_EQ(oracle::from_library(*rho), *rho_oracle);
  }
  auto tau = kendall_tau(xs, ys);
  auto tau_oracle = oracle::kendall_tau_b(x, y);
  ASSERT_EQ(tau.has_value(), tau_oracle.has_value());
  if (tau) {
    ASSERT_EQ(oracle::from_library(*tau), *tau_oracle);
  }
}

}  // namespace

TEST(Spearman, MonotoneIdentity) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {2, 4, 6})->value, 1.0);
}

TEST(Spearman, Reversal) { EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1})->value, -1.0); }

TEST(Spearman, HandOracleOneSwap) {
  // 1 - 6 * sum(d^2) / (m (m^2 - 1)) = 1 - 6 * 2 / 24 = 0.5
  auto r = spearman({1, 2, 3}, {1, 3, 2});
  EXPECT_DOUBLE_EQ(r->value, 0.5);
}

TEST(Spearman, ConstantSideIsUndefined) {
  EXPECT_FALSE(spearman({1, 2, 3}, {4, 4, 4}).has_value());
  EXPECT_FALSE(spearman({2, 2}, {1, 5}).has_value());
}

TEST(Spearman, RejectsShortOrMismatched) {
  EXPECT_THROW(spearman({1}, {1}), StatsError);
  EXPECT_THROW(spearman({1, 2}, {1, 2, 3}), StatsError);
  PairedScores dup{{"a", "a"}, {1, 2}, {1, 2}};
  EXPECT_THROW(spearman(dup), StatsError);
}

TEST(Kendall, IdenticalRankings) { EXPECT_DOUBLE_EQ(kendall_tau({3, 1, 2}, {3, 1, 2})->value, 1.0); }

TEST(Kendall, OneSwapIsOneThird) {
  // pairs (1,2): C, (1,3): C, (2,3): D -> (2 - 1) / 3
  auto t = kendall_tau({1, 2, 3}, {1, 3, 2});
  EXPECT_EQ(static_cast<long long>(t->numerator), 1);
  EXPECT_EQ(static_cast<long long>(t->var_x), 3);
  EXPECT_EQ(static_cast<long long>(t->var_y), 3);
  EXPECT_DOUBLE_EQ(t->value, 1.0 / 3.0);
}

TEST(Kendall, ConstantSideIsUndefined) {
  EXPECT_FALSE(kendall_tau({1, 2, 3}, {4, 4, 4}).has_value());
}

TEST(StatsOracle, ExhaustiveUpToLengthFour) {
  for (int length = 2; length <= 4; ++length) {
    auto vectors = all_vectors(length);
    for (const auto& x : vectors) {
      for (const auto& y : vectors) {
        expect_matches_oracles(x, y);
        if (HasFatalFailure()) return;
      }
    }
  }
}

TEST(StatsOracle, RandomPairsLengthFiveAndSix) {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> entry(1, 5);
  for (int length = 5; length <= 6; ++length) {
    for (int trial = 0; trial < 10000; ++trial) {
      std::vector<int> x(length), y(length);
      for (int& v : x) v = entry(rng);
      for (int& v : y) v = entry(rng);
      expect_matches_oracles(x, y);
      if (HasFatalFailure()) return;
    }
  }
}

TEST(StatsProperties, InvariantUnderIncreasingTransform) {
  std::mt19937 rng(9);
  std::uniform_int_distribution<int> entry(1, 5);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> x(6), y(6), fx(6);
    for (int i = 0; i < 6; ++i) {
      x[i] = entry(rng);
      y[i] = entry(rng);
      fx[i] = std::exp(x[i]) + 10.0;
    }
    auto a = spearman(x, y), b = spearman(fx, y);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) EXPECT_EQ(a->numerator, b->numerator);
    auto c = kendall_tau(x, y), d = kendall_tau(fx, y);
    ASSERT_EQ(c.has_value(), d.has_value());
    if (c) EXPECT_EQ(c->numerator, d->numerator);
  }
}

TEST(StatsProperties, ReversalNegatesWithoutTies) {
  std::mt19937 rng(10);
  std::vector<double> x = {1, 2, 3, 4, 5, 6};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> y = x;
    std::shuffle(y.begin(), y.end(), rng);
    std::vector<double> neg(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) neg[i] = -y[i];
    EXPECT_EQ(spearman(x, y)->numerator, -spearman(x, neg)->numerator);
    EXPECT_EQ(kendall_tau(x, y)->numerator, -kendall_tau(x, neg)->numerator);
  }
}

TEST(Fleiss, UnanimousIsOne) {
  AnnotationTable t{{{3, 0, 0}, {0, 3, 0}, {0, 0, 3}, {3, 0, 0}}};
  EXPECT_DOUBLE_EQ(fleiss_kappa(t)->value, 1.0);
}

TEST(Fleiss, HandOracleZero) {
  // Rows {A,A},{A,B},{B,B},{A,B}: P-bar = 0.5, P-bar_e = 0.5.
  AnnotationTable t{{{2, 0}, {1, 1}, {0, 2}, {1, 1}}};
  auto k = fleiss_kappa(t);
  ASSERT_TRUE(k);
  EXPECT_EQ(static_cast<long long>(k->numerator), 0);
  EXPECT_DOUBLE_EQ(k->value, 0.0);
}

TEST(Fleiss, SingleCategoryIsUndefined) {
  AnnotationTable t{{{0, 0, 4, 0, 0}, {0, 0, 4, 0, 0}}};
  EXPECT_FALSE(fleiss_kappa(t).has_value());
}

TEST(Fleiss, InvalidTables) {
  EXPECT_THROW(fleiss_kappa(AnnotationTable{}), StatsError);
  EXPECT_THROW(fleiss_kappa(AnnotationTable{{{1, 0}, {1, 0}}}), StatsError);
  EXPECT_THROW(fleiss_kappa(AnnotationTable{{{2, 0}, {1, 2}}}), StatsError);
}

TEST(Fleiss, MatchesOracleOnRandomTables) {
  std::mt19937_64 rng(77);
  int checked = 0;
  while (checked < 100) {
    int items = 2 + static_cast<int>(rng() % 20);
    int raters = 2 + static_cast<int>(rng() % 5);
    auto counts = oracle::random_table(rng, items, raters, 5);
    auto expected = oracle::fleiss(counts);
    auto got = fleiss_kappa(AnnotationTable{counts});
    ASSERT_EQ(got.has_value(), expected.has_value());
    if (!got) continue;
    EXPECT_EQ(oracle::Rational(static_cast<long long>(got->numerator),
                               static_cast<long long>(got->denominator)),
              *expected);
    ++checked;
  }
}

TEST(Fleiss, OneIffAllRowsUnanimous) {
  std::mt19937_64 rng(78);
  for (int trial = 0; trial < 500; ++trial) {
    auto counts = oracle::random_table(rng, 4, 3, 2);
    bool unanimous = true;
    for (const auto& row : counts) unanimous = unanimous && (row[0] == 0 || row[1] == 0);
    auto k = fleiss_kappa(AnnotationTable{counts});
    if (!k) continue;
    EXPECT_EQ(k->numerator == k->denominator, unanimous);
  }
}

TEST(Format, ReferenceCell) { EXPECT_EQ(format_correlation_cell(0.836, 0.761), "83.6% / 76.1%"); }

TEST(Format, Perfect) { EXPECT_EQ(format_correlation_cell(1.0, 1.0), "100.0% / 100.0%"); }

TEST(Format, NegativeAndThirds) { EXPECT_EQ(format_correlation_cell(-0.5, 0.333), "-50.0% / 33.3%"); }

TEST(Format, NoNegativeZero) { EXPECT_EQ(format_percent(-0.00004), "0.0%"); }

TEST(Format, HalfAwayFromZeroOracle) {
  // Inputs k / 20000 land exactly on or between tenths of a percent; the
  // oracle rounds with integer arithmetic.
  for (int k = -20000; k <= 20000; ++k) {
    const double value = static_cast<double>(k) / 20000.0;
    const int mag = std::abs(k);
    const int tenths = (mag + 10) / 20;  // mag / 20 tenths, rounded half up
    std::string expected = (k < 0 && tenths != 0 ? "-" : "") + std::to_string(tenths / 10) +
                           "." + std::to_string(tenths % 10) + "%";
    ASSERT_EQ(format_percent(value), expected) << k;
  }
}
