#include <gtest/gtest.h>

#include "diffcap/schedule.hpp"
#include "oracles.hpp"

using diffcap::DomainError;
using diffcap::LinearSchedule;

TEST(Schedule, AlphaMatchesQuadrature) {
  const LinearSchedule s(0.1, 20.0);
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    EXPECT_NEAR(s.alpha(t), static_cast<double>(oracle::alpha_quadrature(0.1L, 20.0L, t)), 1e-12) << "t=" << t;
  }
}

TEST(Schedule, EndpointValues) {
  const LinearSchedule s;
  EXPECT_DOUBLE_EQ(s.alpha(0.0), 1.0);
  EXPECT_DOUBLE_EQ(s.sigma_sq(0.0), 0.0);
  EXPECT_NEAR(s.alpha(1.0), std::exp(-10.05), 1e-15);
  EXPECT_DOUBLE_EQ(s.beta(0.0), 0.1);
  EXPECT_DOUBLE_EQ(s.beta(1.0), 20.0);
}

TEST(Schedule, SigmaSquaredIsRatio) {
  const LinearSchedule s;
  for (double t : {1e-6, 0.01, 0.3, 0.7, 1.0}) {
    const double a = s.alpha(t);
    EXPECT_NEAR(s.sigma_sq(t), (1.0 - a) / a, 1e-9 * (1.0 + (1.0 - a) / a));
    EXPECT_NEAR(s.one_minus_alpha(t), 1.0 - a, 1e-15);
  }
}

TEST(Schedule, DriftAndDiffusion) {
  const LinearSchedule s;
  diffcap::Vector x(3);
  x << 1.0, -2.0, 0.5;
  const auto [f, g] = s.drift_diffusion(x, 0.4);
  EXPECT_TRUE(f.isApprox(-0.5 * s.beta(0.4) * x));
  EXPECT_DOUBLE_EQ(g, std::sqrt(s.beta(0.4)));
}

TEST(Schedule, MonitorDefinition) {
  const LinearSchedule s;
  for (double t : {0.05, 0.2, 0.5, 0.95}) {
    const double a = s.alpha(t);
    EXPECT_NEAR(s.monitor(t), s.beta(t) * std::sqrt(a / (1.0 - a)), 1e-12 * s.monitor(t));
  }
  EXPECT_THROW(s.monitor(0.0), DomainError);
}

TEST(Schedule, LogMonitorDerivativeMatchesFiniteDifference) {
  const LinearSchedule s;
  for (double t : {0.05, 0.2, 0.5, 0.9}) {
    const double h = 1e-6;
    const double fd = (std::log(s.monitor(t + h)) - std::log(s.monitor(t - h))) / (2 * h);
    EXPECT_NEAR(s.log_monitor_derivative(t), fd, 1e-5 * std::abs(fd));
  }
}

TEST(Schedule, TimeForIntegratedBetaInvertsQuadrature) {
  const LinearSchedule s(0.1, 20.0);
  for (double M : {1e-4, 0.01, 0.1, 0.14168933601416658, 1.0, 5.0}) {
    const double t = s.time_for_integrated_beta(M);
    EXPECT_NEAR(t, static_cast<double>(oracle::t_for_level(0.1L, 20.0L, M)), 1e-12) << M;
    EXPECT_NEAR(s.integrated_beta(t), M, 1e-12);
  }
  EXPECT_DOUBLE_EQ(s.time_for_integrated_beta(0.0), 0.0);
}

TEST(Schedule, ConstantScheduleAllowed) {
  const LinearSchedule s(1.0, 1.0);
  EXPECT_NEAR(s.alpha(0.5), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(s.time_for_integrated_beta(0.3), 0.3, 1e-15);
}

TEST(Schedule, RejectsBadParameters) {
  EXPECT_THROW(LinearSchedule(0.0, 20.0), DomainError);
  EXPECT_THROW(LinearSchedule(-1.0, 20.0), DomainError);
  EXPECT_THROW(LinearSchedule(5.0, 1.0), DomainError);
  EXPECT_THROW(LinearSchedule(0.1, std::nan("")), DomainError);
}

TEST(Schedule, RejectsTimesOutsideUnitInterval) {
  const LinearSchedule s;
  EXPECT_THROW(s.alpha(-0.01), DomainError);
  EXPECT_THROW(s.alpha(1.01), DomainError);
  EXPECT_THROW(s.beta(std::nan("")), DomainError);
}
