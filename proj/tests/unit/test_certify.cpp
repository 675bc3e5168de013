#include <gtest/gtest.h>

#include "diffcap/certify.hpp"
#include "oracles.hpp"

using namespace diffcap;

namespace {

/// h(x) = 0 iff w.x > 0, written as a cosine classifier with embedding (w.x, -w.x).
CosineClassifier<LinearEncoder> halfspace(const Vector& w) {
  Matrix A(2, w.size());
  A.row(0) = w.transpose();
  A.row(1) = -w.transpose();
  Vector p0(2), p1(2);
  p0 << 1, -1;
  p1 << -1, 1;
  return {LinearEncoder::from_matrix(A), PrototypeSet({p0, p1})};
}

Vector unit_w(int d) {
  Vector w = Vector::Zero(d);
  w[0] = 0.6;
  w[1] = 0.8;
  return w;
}

}  // namespace

TEST(Certificate, WorkedExampleAgainstHighPrecision) {
  const LinearSchedule s(0.1, 20.0);
  const auto c = compute_certificate(s, 0.5, 0.9, 0.1);
  const long double gap = oracle::normal_quantile(0.9L) - oracle::normal_quantile(0.1L);
  const long double M = std::log1p((2 * 0.5L / gap) * (2 * 0.5L / gap));
  EXPECT_NEAR(c.quantile_gap, static_cast<double>(gap), 1e-12);
  EXPECT_NEAR(c.M, static_cast<double>(M), 1e-12);
  EXPECT_NEAR(c.t_min, static_cast<double>(oracle::t_for_level(0.1L, 20.0L, M)), 1e-10);
  EXPECT_NEAR(c.M, 0.14168933601416658, 1e-12);
  EXPECT_NEAR(c.t_min, 0.11441266638242502, 1e-12);
  EXPECT_FALSE(c.valid);
}

TEST(Certificate, ValidityGate) {
  const LinearSchedule s(0.1, 20.0);
  // M < beta_min needs 2 eps / gap small.
  const auto ok = compute_certificate(s, 0.3, 0.9, 0.1);
  EXPECT_LT(ok.M, 0.1);
  EXPECT_TRUE(ok.valid);
  const auto big = compute_certificate(LinearSchedule(1.0, 20.0), 0.5, 0.9, 0.1);
  EXPECT_TRUE(big.valid);
  const auto zero = compute_certificate(s, 0.0, 0.9, 0.1);
  EXPECT_EQ(zero.M, 0.0);
  EXPECT_EQ(zero.t_min, 0.0);
  EXPECT_TRUE(zero.valid);
}

TEST(Certificate, RadiusFormula) {
  const LinearSchedule s;
  const auto c = compute_certificate(s, 0.2, 0.8, 0.15);
  for (double t : {0.05, 0.3, 1.0})
    EXPECT_NEAR(c.radius_at(t), 0.5 * s.sigma(t) * (oracle::normal_quantile(0.8L) - oracle::normal_quantile(0.15L)),
                1e-10);
}

TEST(Certificate, DegenerateAndInvalidInputs) {
  const LinearSchedule s;
  EXPECT_THROW(compute_certificate(s, 0.1, 0.4, 0.4), DegenerateMarginError);
  EXPECT_THROW(compute_certificate(s, 0.1, 0.3, 0.6), DegenerateMarginError);
  EXPECT_THROW(compute_certificate(s, -0.1, 0.9, 0.1), DomainError);
  EXPECT_THROW(compute_certificate(s, 0.1, 1.0, 0.1), DomainError);
}

TEST(Smoothing, ClassProbabilitiesMatchClosedForm) {
  const LinearSchedule s;
  const Vector w = unit_w(4);
  const auto clf = halfspace(w);
  const double margin = 0.3;
  const Vector x = margin * w;
  NoiseStream noise(1, 0, Purpose::kCertify);
  const std::vector<double> grid{0.05, 0.2};
  const auto est = estimate_class_probs(clf, x, s, grid, 20000, 0.999, noise);
  EXPECT_EQ(est.k1, 0u);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double p = static_cast<double>(oracle::normal_cdf(margin / s.sigma(grid[g])));
    const double frac = est.per_t[g].counts[0] / 20000.0;
    EXPECT_NEAR(frac, p, 4 * std::sqrt(p * (1 - p) / 20000));
    EXPECT_LE(est.per_t[g].p1_lower, frac);
    EXPECT_GE(est.per_t[g].p2_upper, 1 - frac);
  }
  EXPECT_EQ(est.p1_lower, std::min(est.per_t[0].p1_lower, est.per_t[1].p1_lower));
  EXPECT_THROW(estimate_class_probs(clf, x, s, grid, 50, 0.999, noise), DomainError);
}

TEST(Verify, PassesInsideRadiusFailsFarOutside) {
  const LinearSchedule s;
  const Vector w = unit_w(4);
  const auto clf = halfspace(w);
  const double margin = 0.3;
  const Vector x = margin * w;
  const double t = 0.05;
  // Exact probabilities give radius = margin.
  const double p1 = static_cast<double>(oracle::normal_cdf(margin / s.sigma(t)));
  const auto cert = compute_certificate(s, 0.1, p1, 1 - p1);
  EXPECT_NEAR(cert.radius_at(t), margin, 1e-9);
  NoiseStream a(2, 0, Purpose::kCertify), b(3, 0, Purpose::kCertify);
  const Vector dir = -w;
  EXPECT_TRUE(verify_certificate(clf, x, dir, 0.5 * cert.radius_at(t), t, 5000, s, a).passed);
  EXPECT_FALSE(verify_certificate(clf, x, dir, 3.0 * cert.radius_at(t), t, 5000, s, b).passed);
  EXPECT_THROW(verify_certificate(clf, x, 2 * dir, 0.1, t, 100, s, a), DomainError);
}
