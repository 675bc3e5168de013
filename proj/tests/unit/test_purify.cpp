#include <gtest/gtest.h>

#include "diffcap/purify.hpp"

using namespace diffcap;

namespace {

struct Fixture {
  LinearSchedule s;
  LinearEncoder enc{8, 16, 21};
  GmmDistribution gmm{{0.5, 0.5},
                      {Vector::Constant(16, 0.5), Vector::Constant(16, -0.5)},
                      {Vector::Constant(16, 0.01), Vector::Constant(16, 0.01)}};
};

PurifyConfig make_purify_config(double tau = 0.96, int T = 100, double min_t = 0.0) {
  PurifyConfig c;
  c.tau = tau;
  c.T = T;
  c.min_t = min_t;
  return c;
}

Vector random_input(NoiseStream& n) { return n.uniform_vector(16, -1, 1); }

}  // namespace

TEST(Stabilize, TauMinusOneStopsAtFirstLevel) {
  Fixture f;
  NoiseStream data(1, 0, Purpose::kData);
  for (int i = 0; i < 10; ++i) {
    NoiseStream noise(2, i, Purpose::kInject);
    const auto r = stabilize(random_input(data), f.enc, f.s, make_purify_config(-1.0, 100), noise);
    EXPECT_EQ(r.steps_used, 1);
    EXPECT_DOUBLE_EQ(r.t_stop, 0.01);
    EXPECT_EQ(r.similarity_trace.size(), 1u);
  }
}

TEST(Stabilize, TauAboveOneRunsToEnd) {
  Fixture f;
  NoiseStream data(1, 0, Purpose::kData);
  for (auto mode : {InjectionMode::kShared, InjectionMode::kMarkov, InjectionMode::kResample}) {
    NoiseStream noise(3, 0, Purpose::kInject);
    PurifyConfig cfg = make_purify_config(1.01, 50);
    cfg.injection = mode;
    const auto r = stabilize(random_input(data), f.enc, f.s, cfg, noise);
    EXPECT_EQ(r.steps_used, 50);
    EXPECT_DOUBLE_EQ(r.t_stop, 1.0);
    EXPECT_EQ(r.similarity_trace.size(), 50u);
  }
}

TEST(Stabilize, StopTimeMonotoneInThreshold) {
  Fixture f;
  NoiseStream data(4, 0, Purpose::kData);
  const std::vector<double> taus{-1.0, 0.5, 0.9, 0.99, 0.995, 0.999, 0.9999, 1.5};
  for (int i = 0; i < 50; ++i) {
    const Vector x = random_input(data);
    double prev = 0.0;
    for (double tau : taus) {
      NoiseStream noise(5, i, Purpose::kInject);
      const double t = stabilize(x, f.enc, f.s, make_purify_config(tau, 100), noise).t_stop;
      EXPECT_GE(t, prev) << "input " << i << " tau " << tau;
      prev = t;
    }
  }
}

TEST(Stabilize, MinTimeIsStrict) {
  Fixture f;
  const Vector x = Vector::Constant(16, 0.5);
  NoiseStream noise(6, 0, Purpose::kInject);
  PurifyConfig cfg = make_purify_config(-1.0, 100, 0.2);
  EXPECT_EQ(cfg.first_allowed_step(), 21);
  const auto r = stabilize(x, f.enc, f.s, cfg, noise);
  EXPECT_NEAR(r.t_stop, 0.21, 1e-15);
}

TEST(Stabilize, SharedPathUsesOneNoiseDraw) {
  Fixture f;
  const Vector x = Vector::Constant(16, 0.3);
  NoiseStream noise(7, 0, Purpose::kInject);
  const auto r = stabilize(x, f.enc, f.s, make_purify_config(1.5, 20), noise);
  NoiseStream replay = noise.child(Purpose::kInject);
  const Vector eps = replay.normal_vector(16);
  EXPECT_LT((r.x_stable - forward_with_noise(x, eps, 1.0, f.s)).norm(), 1e-12);
}

TEST(Stabilize, TraceIsConsecutiveCosine) {
  Fixture f;
  const Vector x = Vector::Constant(16, 0.3);
  NoiseStream noise(8, 0, Purpose::kInject);
  const auto r = stabilize(x, f.enc, f.s, make_purify_config(1.5, 10), noise);
  NoiseStream replay = noise.child(Purpose::kInject);
  const Vector eps = replay.normal_vector(16);
  Vector prev = f.enc.encode(x);
  for (int k = 1; k <= 10; ++k) {
    const Vector e = f.enc.encode(forward_with_noise(x, eps, k / 10.0, f.s));
    EXPECT_NEAR(r.similarity_trace[k - 1], e.dot(prev) / (e.norm() * prev.norm()), 1e-12);
    prev = e;
  }
}

TEST(Stabilize, Validation) {
  Fixture f;
  NoiseStream noise(9, 0, Purpose::kInject);
  EXPECT_THROW(stabilize(Vector::Constant(16, 2.0), f.enc, f.s, make_purify_config(), noise), DomainError);
  EXPECT_THROW(stabilize(Vector::Zero(16), f.enc, f.s, make_purify_config(0.9, 0), noise), DomainError);
  EXPECT_THROW(stabilize(Vector::Zero(16), f.enc, f.s, make_purify_config(0.9, 10, 1.0), noise), DomainError);
  EXPECT_THROW(stabilize(Vector::Zero(16), f.enc, f.s, make_purify_config(0.9, 10), noise), UndefinedSimilarityError);
  EXPECT_THROW(parse_injection_mode("bogus"), DomainError);
  EXPECT_EQ(parse_reverse_mode("pf"), ReverseMode::kProbabilityFlow);
}

TEST(Purify, CleanInputsKeepTheirClass) {
  Fixture f;
  const auto score = make_gmm_score(f.gmm, f.s);
  const auto protos = PrototypeSet::from_class_means(f.enc, f.gmm.means());
  const CosineClassifier<LinearEncoder> clf(f.enc, protos);
  NoiseStream data(10, 0, Purpose::kData);
  int correct = 0;
  for (int i = 0; i < 40; ++i) {
    const std::size_t k = i % 2;
    const Vector x = clamp_to_box(f.gmm.sample_component(k, data));
    NoiseStream noise(11, i, Purpose::kInject);
    PurifyConfig cfg = make_purify_config(0.998, 100);
    cfg.reverse.mode = ReverseMode::kProbabilityFlow;
    const auto r = diffcap_purify(x, f.enc, f.s, score, cfg, noise);
    correct += clf.predict(r.x_clean) == k;
    EXPECT_EQ(static_cast<int>(r.similarity_trace.size()), r.steps_used);
  }
  EXPECT_GE(correct, 39);
}

TEST(FixedT, ReportsFixedTimeAndNoTrace) {
  Fixture f;
  const auto score = make_gmm_score(f.gmm, f.s);
  NoiseStream noise(12, 0, Purpose::kFixedBaseline);
  const auto r = fixed_t_purify(Vector::Constant(16, 0.5), f.s, score, 0.075, ReverseConfig{}, noise);
  EXPECT_DOUBLE_EQ(r.t_stop, 0.075);
  EXPECT_EQ(r.steps_used, 0);
  EXPECT_TRUE(r.similarity_trace.empty());
  EXPECT_THROW(fixed_t_purify(Vector::Zero(16), f.s, score, 0.0, ReverseConfig{}, noise), DomainError);
}
