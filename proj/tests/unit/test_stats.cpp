#include <gtest/gtest.h>

#include <cmath>

#include "diffcap/stats.hpp"
#include "oracles.hpp"

using namespace diffcap;
using namespace diffcap::stats;

TEST(Quantile, MatchesBisectionOnCdf) {
  for (double p : {1e-12, 1e-6, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999, 1 - 1e-9}) {
    const double ref = static_cast<double>(oracle::normal_quantile(p));
    EXPECT_NEAR(gaussian_quantile(p), ref, 1e-12 * (1 + std::abs(ref))) << p;
  }
  EXPECT_NEAR(gaussian_quantile(0.9), 1.2815515655446004, 1e-15);
  EXPECT_DOUBLE_EQ(gaussian_quantile(0.5), 0.0);
}

TEST(Quantile, RejectsBoundaries) {
  EXPECT_THROW(gaussian_quantile(0.0), DomainError);
  EXPECT_THROW(gaussian_quantile(1.0), DomainError);
  EXPECT_THROW(gaussian_quantile(std::nan("")), DomainError);
}

TEST(ClopperPearson, BoundsSolveBinomialTailEquations) {
  const double conf = 0.99;
  for (auto [k, n] : {std::pair<std::uint64_t, std::uint64_t>{3, 10}, {50, 100}, {97, 100}, {1, 1000}}) {
    const auto ci = clopper_pearson(k, n, conf);
    // Lower: P(X >= k | p = lower) = 1 - conf. Upper: P(X <= k | p = upper) = 1 - conf.
    EXPECT_NEAR(static_cast<double>(1.0L - oracle::binom_cdf(k - 1, n, ci.lower)), 1 - conf, 1e-9);
    EXPECT_NEAR(static_cast<double>(oracle::binom_cdf(k, n, ci.upper)), 1 - conf, 1e-9);
  }
}

TEST(ClopperPearson, EdgeCounts) {
  const auto zero = clopper_pearson(0, 20, 0.95);
  EXPECT_EQ(zero.lower, 0.0);
  EXPECT_NEAR(zero.upper, 1.0 - std::pow(0.05, 1.0 / 20), 1e-12);
  const auto all = clopper_pearson(20, 20, 0.95);
  EXPECT_EQ(all.upper, 1.0);
  EXPECT_NEAR(all.lower, std::pow(0.05, 1.0 / 20), 1e-12);
  EXPECT_THROW(clopper_pearson(3, 2, 0.95), DomainError);
  EXPECT_THROW(clopper_pearson(0, 0, 0.95), DomainError);
}

TEST(KolmogorovSmirnov, StatisticMatchesBruteForce) {
  NoiseStream noise(11, 0, Purpose::kPermutation);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a, b;
    for (int i = 0; i < 15 + trial; ++i) a.push_back(noise.normal());
    for (int i = 0; i < 25; ++i) b.push_back(noise.normal() + 0.3);
    EXPECT_NEAR(ks_two_sample(a, b).statistic, oracle::ks_statistic(a, b), 1e-15);
  }
}

TEST(KolmogorovSmirnov, StatisticHandlesTies) {
  const std::vector<double> a{1, 1, 2, 2, 3}, b{1, 2, 2, 2, 4, 4};
  EXPECT_NEAR(ks_two_sample(a, b).statistic, oracle::ks_statistic(a, b), 1e-15);
}

TEST(KolmogorovSmirnov, ExactPValueMatchesEnumeration) {
  NoiseStream noise(12, 0, Purpose::kPermutation);
  for (auto [n, m] : {std::pair<int, int>{4, 5}, {6, 6}, {3, 9}, {7, 5}}) {
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) a.push_back(noise.normal());
    for (int i = 0; i < m; ++i) b.push_back(noise.normal() + 0.8);
    EXPECT_NEAR(ks_two_sample(a, b).p_value, oracle::ks_exact_pvalue_bruteforce(a, b), 1e-12) << n << "," << m;
  }
}

TEST(KolmogorovSmirnov, AsymptoticRegime) {
  std::vector<double> a, b;
  for (int i = 0; i < 100; ++i) {
    a.push_back(i);
    b.push_back(i + 50);
  }
  const auto r = ks_two_sample(a, b);
  EXPECT_NEAR(r.statistic, 0.5, 1e-12);
  EXPECT_LT(r.p_value, 1e-8);
  const auto same = ks_two_sample(a, a);
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_EQ(same.p_value, 1.0);
}

TEST(KolmogorovSmirnov, NullRejectionRate) {
  NoiseStream noise(13, 0, Purpose::kPermutation);
  int rejections = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> a, b;
    for (int i = 0; i < 100; ++i) {
      a.push_back(noise.normal());
      b.push_back(noise.normal());
    }
    rejections += ks_two_sample(a, b).p_value < 0.05;
  }
  EXPECT_NEAR(rejections / double(trials), 0.05, 0.02);
}

TEST(Permutation, DetectsShiftAndAcceptsNull) {
  NoiseStream noise(14, 0, Purpose::kPermutation);
  std::vector<double> a, b, c;
  for (int i = 0; i < 40; ++i) {
    a.push_back(noise.normal());
    b.push_back(noise.normal() + 2.0);
    c.push_back(noise.normal());
  }
  NoiseStream p1(15, 0, Purpose::kPermutation), p2(15, 0, Purpose::kPermutation);
  EXPECT_LT(permutation_test(a, b, 999, p1).p_value, 0.01);
  const auto same = permutation_test(a, a, 999, p2);
  EXPECT_EQ(same.p_value, 1.0);
  EXPECT_THROW(permutation_test(a, {}, 10, p1), DomainError);
}

TEST(Summary, QuartilesAndOrder) {
  const std::vector<double> v{5, 1, 4, 2, 3};
  const auto s = summarize(v);
  EXPECT_EQ(s.count, 5u);
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.q1, 2);
  EXPECT_EQ(s.median, 3);
  EXPECT_EQ(s.q3, 4);
  EXPECT_EQ(s.max, 5);
  EXPECT_EQ(s.mean, 3);
  EXPECT_NEAR(s.stddev, std::sqrt(2.5), 1e-15);
  EXPECT_THROW(summarize(std::vector<double>{}), DomainError);
}

TEST(Rank, SpearmanMatchesReference) {
  const std::vector<double> a{1, 2, 2, 5, 3, 9}, b{6, 5, 5, 1, 2, 0};
  EXPECT_NEAR(spearman(a, b), oracle::spearman(a, b), 1e-14);
  EXPECT_NEAR(spearman(a, a), 1.0, 1e-15);
}
