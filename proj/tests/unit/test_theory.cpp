#include <gtest/gtest.h>

#include <Eigen/SVD>

#include "diffcap/theory.hpp"
#include "oracles.hpp"

using namespace diffcap;
using namespace diffcap::theory;

TEST(OperatorNorm, MatchesSingularValue) {
  NoiseStream noise(1, 0, Purpose::kTheory);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix A(6, 9);
    for (int i = 0; i < 6; ++i) A.row(i) = noise.normal_vector(9).transpose();
    const Eigen::JacobiSVD<Matrix> svd(A);
    EXPECT_NEAR(operator_norm(A), svd.singularValues()(0), 1e-9 * svd.singularValues()(0));
  }
}

TEST(Lipschitz, LinearEstimateApproachesOperatorNorm) {
  const LinearEncoder enc(8, 16, 21);
  NoiseStream noise(2, 0, Purpose::kTheory);
  const auto est = lipschitz_estimate(enc, 1.0, 4000, noise);
  ASSERT_TRUE(est.operator_norm.has_value());
  EXPECT_LE(est.estimate, *est.operator_norm * (1 + 1e-9));
  EXPECT_GE(est.estimate, 0.99 * *est.operator_norm);
  EXPECT_THROW(lipschitz_estimate(enc, 1.0, 10, noise), DomainError);
}

TEST(Lipschitz, MlpEstimateBoundedByLayerNorms) {
  const MlpEncoder enc(8, 16, 32, 4);
  NoiseStream noise(3, 0, Purpose::kTheory);
  const auto est = lipschitz_estimate(enc, 1.0, 2000, noise);
  EXPECT_FALSE(est.operator_norm.has_value());
  EXPECT_GT(est.estimate, 0.0);
  EXPECT_LE(est.estimate, operator_norm(enc.w2()) * operator_norm(enc.w1()) * (1 + 1e-9));
}

TEST(Monitor, DecreasingWithNegativeLogDerivative) {
  const auto r = monitor_decreasing_check(LinearSchedule(0.1, 20.0), 10000);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.worst_adjacent_ratio, 1.0);
  EXPECT_LT(r.max_log_derivative, 0.0);
  EXPECT_FALSE(r.constant_schedule);
  const auto c = monitor_decreasing_check(LinearSchedule(2.0, 2.0), 1000);
  EXPECT_TRUE(c.passed);
  EXPECT_TRUE(c.constant_schedule);
  EXPECT_THROW(monitor_decreasing_check(LinearSchedule{}, 10), DomainError);
}

TEST(Drift, DecreasesAndStaysBelowBound) {
  const LinearSchedule s;
  const LinearEncoder enc(8, 16, 21);
  const Vector x0 = Vector::Constant(16, 0.5);
  NoiseStream noise(4, 0, Purpose::kTheory);
  const double L = operator_norm(enc.matrix());
  const std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto curve = embedding_drift_curve(enc, x0, s, 0.01, grid, 1000, L, noise);
  std::vector<double> est;
  for (const auto& p : curve.points) {
    est.push_back(p.estimate);
    EXPECT_LE(p.estimate, p.bound);
    EXPECT_NEAR(p.bound, 0.5 * L * 4.0 * 0.01 * s.monitor(p.t), 1e-12);
  }
  EXPECT_LT(oracle::spearman(grid, est), -0.9);
}

TEST(Drift, LinearEncoderMatchesClosedFormExpectation) {
  // With a shared eps, phi(x(t)) - phi(x(t+d)) = A ((ra - rb) x0 + (qa - qb) eps) is Gaussian.
  const LinearSchedule s;
  const LinearEncoder enc(2, 2, 5);
  const Vector x0 = Vector::Zero(2);
  NoiseStream noise(5, 0, Purpose::kTheory);
  const double t = 0.3, d = 0.05;
  const auto curve = embedding_drift_curve(enc, x0, s, d, {t}, 100000, 1.0, noise);
  const double q = std::sqrt(s.one_minus_alpha(t + d)) - std::sqrt(s.one_minus_alpha(t));
  // E||A eps|| for 2-d eps with covariance A A^T: Monte-Carlo oracle with an independent stream.
  NoiseStream ref(6, 0, Purpose::kTheory);
  double sum = 0;
  for (int i = 0; i < 200000; ++i) sum += (enc.matrix() * ref.normal_vector(2)).norm();
  const double expected = std::abs(q) * sum / 200000;
  EXPECT_NEAR(curve.points[0].estimate, expected, 5 * curve.points[0].std_error + 1e-3 * expected);
}

TEST(Convergence, NearOneDecreasesToZero) {
  const LinearSchedule s;
  const LinearEncoder enc(8, 16, 21);
  NoiseStream noise(7, 0, Purpose::kTheory);
  const auto r = convergence_check(enc, Vector::Constant(16, 0.5), s, {{0.9, 0.95}, {0.95, 0.99}, {0.99, 1.0}}, 500,
                                   0.05, noise);
  EXPECT_TRUE(r.decreasing);
  EXPECT_TRUE(r.below_ceiling);
  EXPECT_TRUE(r.passed);
}
