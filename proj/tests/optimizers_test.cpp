#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "optdiag/errors.hpp"
#include "optdiag/optimizers.hpp"
#include "test_objectives.hpp"

using namespace optdiag;

TEST(Sgdm, FirstStep) {
  SgdmState s(1, 0.9, 0.1);
  const auto d = sgdm_step(s, ParamVector{1.0}, 0.1);
  EXPECT_DOUBLE_EQ(d[0], -0.09);
  EXPECT_EQ(s.delta, d);
}

// The momentum variant scales the whole bracket by beta, so beta = 0 yields no
// motion at all; plain GD is its own optimizer kind.
TEST(Sgdm, ZeroMomentumHasNoMotion) {
  SgdmState s(2, 0.0, 0.1);
  const auto d = sgdm_step(s, ParamVector{1.0, -3.0}, 0.1);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(d[1], 0.0);
}

TEST(Sgdm, GradientFreeDecayIsGeometric) {
  SgdmState s(1, 0.5, 0.1);
  s.delta = {1.0};
  for (int t = 1; t <= 10; ++t) {
    const auto d = sgdm_step(s, ParamVector{0.0}, 0.1);
    EXPECT_EQ(d[0], std::pow(0.5, t));
  }
}

TEST(Sgdm, RejectsBadInput) {
  SgdmState s(1, 0.9, 0.1);
  EXPECT_THROW(sgdm_step(s, ParamVector{std::nan("")}, 0.1), NumericalInputError);
  EXPECT_THROW(sgdm_step(s, ParamVector{1.0, 2.0}, 0.1), ContractViolation);
  EXPECT_THROW(sgdm_step(s, ParamVector{1.0}, 0.0), ContractViolation);
}

TEST(Gd, MatchesHandRolledLoopBitwise) {
  const auto q = optdiag::testing::Quadratic::diag({1.0, 3.0, 0.5});
  ParamVector x{1.0, -2.0, 4.0}, ref = x;
  Optimizer opt = Optimizer::gd();
  EXPECT_EQ(opt.kind(), OptimizerKind::gd);
  for (int t = 0; t < 50; ++t) {
    const auto g = q.evaluate(x, Batch::full(1)).grad;
    const auto d = opt.step(g, 0.1, x);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += 1.0 * d[i];
    const auto gr = q.evaluate(ref, Batch::full(1)).grad;
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = ref[i] + 1.0 * (-0.1 * gr[i]);
    ASSERT_EQ(x, ref) << "step " << t;
  }
}

TEST(Adamw, FirstStepBiasCorrected) {
  AdamwState s(1, 0.001);
  const auto d = adamw_step(s, ParamVector{1.0}, 0.001, ParamVector{0.0});
  EXPECT_NEAR(d[0], -0.001 / (1.0 + 1e-8), 1e-18);
  EXPECT_NEAR(d[0], -0.000999999990, 1e-15);
  EXPECT_EQ(s.t, 1u);
}

TEST(Adamw, ZeroGradientIsFixedPoint) {
  AdamwState s(3, 0.01);
  for (int t = 0; t < 20; ++t) {
    const auto d = adamw_step(s, ParamVector(3, 0.0), 0.01, ParamVector{1, 2, 3});
    for (double v : d) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(s.t, 20u);
}

TEST(Adamw, PureDecay) {
  AdamwState s(1, 0.001, 0.9, 0.999, 1e-8, 0.1);
  const auto d = adamw_step(s, ParamVector{0.0}, 0.001, ParamVector{1.0});
  EXPECT_NEAR(d[0], -0.0001, 1e-18);
}

TEST(Adamw, StaysFiniteOnWildGradients) {
  AdamwState s(2, 0.1);
  CounterRng rng(2, "adamw");
  ParamVector x{0.0, 0.0};
  for (int t = 0; t < 2000; ++t) {
    const double scale = std::pow(10.0, rng.uniform(-150.0, 150.0));
    const ParamVector g{scale * rng.normal(), (t % 7 == 0) ? 0.0 : rng.normal()};
    const auto d = adamw_step(s, g, 0.1, x);
    ASSERT_TRUE(all_finite(d));
    ASSERT_TRUE(all_finite(s.m));
    ASSERT_TRUE(all_finite(s.v));
    for (double v : s.v) ASSERT_GE(v, 0.0);
  }
}

TEST(Scaling, NoneIsOne) {
  ScalingPolicy p(ScalingMode::none, 1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_scale(p), 1.0);
  EXPECT_EQ(p.rng.draws(), 0u);
}

TEST(Scaling, Exp1Moments) {
  ScalingPolicy p(ScalingMode::exp1, 7);
  const int n = 1000000;
  double s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double s = sample_scale(p);
    ASSERT_GE(s, 0.0);
    s1 += s;
    s2 += s * s;
  }
  EXPECT_EQ(p.rng.draws(), static_cast<std::uint64_t>(n));
  EXPECT_NEAR(s1 / n, 1.0, 0.01);
  EXPECT_NEAR(s2 / n, 2.0, 0.03);
}

TEST(Scaling, SameSeedSameSequence) {
  ScalingPolicy a(ScalingMode::exp1, 3), b(ScalingMode::exp1, 3), c(ScalingMode::exp1, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = sample_scale(a);
    EXPECT_EQ(x, sample_scale(b));
    differs |= x != sample_scale(c);
  }
  EXPECT_TRUE(differs);
}

TEST(Schedule, Constant) {
  Schedule s{ScheduleKind::constant, 0.1, 0, 100, 1, 10};
  for (std::size_t t = 0; t < 100; ++t) EXPECT_EQ(schedule_lr(s, t), 0.1);
}

TEST(Schedule, LinearDecayMidpoint) {
  Schedule s{ScheduleKind::linear_decay, 0.1, 0, 100, 1, 10};
  EXPECT_DOUBLE_EQ(schedule_lr(s, 50), 0.05);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 0), 0.1);
}

TEST(Schedule, Cosine) {
  Schedule s{ScheduleKind::cosine, 0.1, 0, 100, 1, 10};
  EXPECT_DOUBLE_EQ(schedule_lr(s, 0), 0.1);
  EXPECT_NEAR(schedule_lr(s, 99), 0.1 * 0.5 * (1 + std::cos(0.99 * std::numbers::pi)), 1e-18);
  EXPECT_NEAR(schedule_lr(s, 99), 2.47e-5, 0.01e-5);
  for (std::size_t t = 0; t < 100; ++t) EXPECT_GT(schedule_lr(s, t), 0.0);
}

TEST(Schedule, StepDecayAndWarmup) {
  Schedule s{ScheduleKind::step_decay, 0.1, 4, 100, 30, 10};
  EXPECT_DOUBLE_EQ(schedule_lr(s, 0), 0.025);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 3), 0.1);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 4), 0.1);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 33), 0.1);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 34), 0.01);
  EXPECT_DOUBLE_EQ(schedule_lr(s, 64), 0.001);
}

TEST(Schedule, OutOfRange) {
  Schedule s{ScheduleKind::constant, 0.1, 0, 10, 1, 10};
  EXPECT_THROW(schedule_lr(s, 10), ContractViolation);
}

TEST(Optimizer, DisplacementIsScaleTimesDelta) {
  const auto q = optdiag::testing::Quadratic::diag({2.0, 0.5});
  for (Optimizer opt : {Optimizer::gd(), Optimizer::sgdm(2, 0.9, 0.1), Optimizer::adamw(AdamwState(2, 0.05))}) {
    ScalingPolicy p(ScalingMode::exp1, 1);
    ParamVector x{1.0, -1.0};
    for (int t = 0; t < 20; ++t) {
      const auto g = q.evaluate(x, Batch::full(1)).grad;
      const auto d = opt.step(g, 0.1, x);
      const double s = sample_scale(p);
      ParamVector next = x;
      for (std::size_t i = 0; i < 2; ++i) next[i] += s * d[i];
      for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(next[i] - x[i], s * d[i], 1e-15 * (1 + std::abs(x[i])));
      x = next;
    }
  }
}
