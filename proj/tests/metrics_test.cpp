#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>

#include "optdiag/errors.hpp"
#include "optdiag/metrics.hpp"
#include "optdiag/optimizers.hpp"
#include "test_objectives.hpp"

using namespace optdiag;
using optdiag::testing::any_batch;
using optdiag::testing::Linear;
using optdiag::testing::Quadratic;
using optdiag::testing::Scalar;

namespace {

const Scalar kHalfSquare([](double x) { return 0.5 * x * x; }, [](double x) { return x; });
const Scalar kSquare([](double x) { return x * x; }, [](double x) { return 2 * x; });
const Scalar kNegSquare([](double x) { return -x * x; }, [](double x) { return -2 * x; });
const Scalar kNegHalfSquare([](double x) { return -0.5 * x * x; }, [](double x) { return -x; });

}  // namespace

TEST(InstGap, Examples) {
  EXPECT_EQ(inst_gap(kHalfSquare, ParamVector{2}, ParamVector{0}, any_batch()), -2.0);
  const Linear lin({1.5, -2.0}, 3.0);
  EXPECT_NEAR(inst_gap(lin, ParamVector{1, 2}, ParamVector{-4, 7}, any_batch()), 0.0, 1e-12);
  EXPECT_EQ(inst_gap(kNegSquare, ParamVector{1}, ParamVector{0}, any_batch()), 1.0);
}

TEST(InstGap, NonFiniteRejected) {
  const Scalar bad([](double x) { return x > 0 ? std::nan("") : 0.0; }, [](double) { return 0.0; });
  EXPECT_THROW(inst_gap(bad, ParamVector{1}, ParamVector{0}, any_batch()), NumericalInputError);
}

TEST(GapAccumulators, Examples) {
  MetricState s;
  update_gap_accumulators(s, 1.0, 0.99);
  const auto r = update_gap_accumulators(s, 3.0, 0.99);
  EXPECT_EQ(r.avg_gap, 2.0);

  MetricState f;
  EXPECT_EQ(update_gap_accumulators(f, -0.7, 0.99).exp_gap, -0.7);

  MetricState e;
  update_gap_accumulators(e, 0.0, 0.99);
  EXPECT_NEAR(update_gap_accumulators(e, 1.0, 0.99).exp_gap, 0.01, 1e-15);
  EXPECT_EQ(e.gap_count, 2u);
}

TEST(InstSmooth, Examples) {
  const auto id = Quadratic::diag({1, 1, 1});
  EXPECT_NEAR(*inst_smooth(id, ParamVector{1, 2, 3}, ParamVector{-1, 0, 5}, any_batch(), 1e-12), 1.0, 1e-15);
  const Scalar five([](double x) { return 2.5 * x * x; }, [](double x) { return 5 * x; });
  EXPECT_EQ(*inst_smooth(five, ParamVector{1}, ParamVector{0}, any_batch(), 1e-12), 5.0);
  EXPECT_FALSE(inst_smooth(five, ParamVector{1}, ParamVector{1}, any_batch(), 1e-12).has_value());
}

TEST(SmoothAccumulators, Examples) {
  MetricState s;
  update_smooth_accumulators(s, 3, 0.99);
  EXPECT_EQ(update_smooth_accumulators(s, 1, 0.99).max_smooth, 3.0);
  EXPECT_EQ(update_smooth_accumulators(s, 5, 0.99).max_smooth, 5.0);

  MetricState e;
  update_smooth_accumulators(e, 3, 0.99);
  EXPECT_NEAR(update_smooth_accumulators(e, 5, 0.99).exp_smooth, 3.02, 1e-14);
}

TEST(SmoothAccumulators, BoundedByLargestEigenvalue) {
  CounterRng rng(8, "smooth_bound");
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> eigs{0.5, 1.5, 4.0};
    const Quadratic q(optdiag::testing::random_symmetric(eigs, rng));
    MetricState s;
    for (int k = 0; k < 200; ++k) {
      ParamVector x(3), y(3);
      for (double& v : x) v = rng.normal();
      for (double& v : y) v = rng.normal();
      const auto sm = inst_smooth(q, x, y, any_batch(), 1e-12);
      ASSERT_TRUE(sm);
      ASSERT_LE(*sm, 4.0 + 1e-9);
      update_smooth_accumulators(s, *sm, 0.99);
    }
    EXPECT_LE(*s.max_smooth, 4.0 + 1e-9);
  }
}

TEST(Correlations, Examples) {
  // GD on 1/2 x^2 from 1 with eta 0.1: Delta = -0.1, x_curr = 0.9.
  const auto c = update_correlations(kHalfSquare, ParamVector{1.0}, ParamVector{0.9}, ParamVector{-0.1}, 1.0, any_batch());
  EXPECT_NEAR(c.update_corr, -0.09, 1e-16);
  EXPECT_EQ(c.update_corr, c.update_corr_rs);

  const auto z = update_correlations(kSquare, ParamVector{2.0}, ParamVector{2.0}, ParamVector{0.0}, 1.0, any_batch());
  EXPECT_EQ(z.update_corr, 0.0);
  EXPECT_EQ(z.update_corr_rs, 0.0);
  EXPECT_EQ(z.loss_diff, 0.0);

  const auto d = update_correlations(kSquare, ParamVector{1.0}, ParamVector{0.5}, ParamVector{-0.5}, 1.0, any_batch());
  EXPECT_EQ(d.loss_diff, -0.75);
}

TEST(Correlations, ScaledDisplacement) {
  // x_prev = 1, Delta = -0.2, s = 2.5 -> x_curr = 0.5.
  const auto c = update_correlations(kHalfSquare, ParamVector{1.0}, ParamVector{0.5}, ParamVector{-0.2}, 2.5, any_batch());
  EXPECT_NEAR(c.update_corr, 0.5 * -0.5, 1e-16);
  EXPECT_NEAR(c.update_corr_rs, 0.5 * -0.2, 1e-16);
  EXPECT_EQ(c.loss_diff, 0.125 - 0.5);
}

TEST(Ratio, CenteredQuadratic) {
  MetricState s;
  s.x_star = ParamVector{0.0};
  EXPECT_FALSE(ratio_accumulate(kHalfSquare, any_batch(), ParamVector{2.0}, s).ratio == std::nullopt);
  const auto r = ratio_accumulate(kHalfSquare, any_batch(), ParamVector{1.0}, s);
  EXPECT_EQ(s.ratio_num_sum, 5.0);
  EXPECT_EQ(s.ratio_den_sum, 2.5);
  EXPECT_EQ(*r.ratio, 2.0);
  EXPECT_EQ(r.denominator_sign, 1);
}

TEST(Ratio, DegenerateDenominatorIsAbsent) {
  MetricState s;
  s.x_star = ParamVector{0.3};
  for (int k = 0; k < 3; ++k) {
    const auto r = ratio_accumulate(kHalfSquare, any_batch(), ParamVector{0.3}, s);
    EXPECT_FALSE(r.ratio.has_value());
    EXPECT_EQ(r.denominator_sign, 0);
  }
}

TEST(Ratio, ConcaveCarriesNegativeSign) {
  MetricState s;
  s.x_star = ParamVector{0.0};
  const auto r = ratio_accumulate(kNegHalfSquare, any_batch(), ParamVector{1.0}, s);
  EXPECT_EQ(s.ratio_num_sum, -1.0);
  EXPECT_EQ(s.ratio_den_sum, -0.5);
  EXPECT_EQ(*r.ratio, 2.0);
  EXPECT_EQ(r.denominator_sign, -1);
}

TEST(Ratio, MissingReferenceIsConfigError) {
  MetricState s;
  EXPECT_THROW(ratio_accumulate(kHalfSquare, any_batch(), ParamVector{1.0}, s), ConfigError);
}

TEST(Ratio, IsotropicIdentityHoldsOverManyAccumulations) {
  const ParamVector c{0.3, -1.2, 2.0};
  const Quadratic q({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, c);
  MetricState s;
  s.x_star = c;
  CounterRng rng(9, "ratio");
  for (int k = 0; k < 500; ++k) {
    ParamVector x(3);
    for (std::size_t i = 0; i < 3; ++i) x[i] = c[i] + std::pow(0.97, k) * rng.normal();
    const auto r = ratio_accumulate(q, any_batch(), x, s);
    ASSERT_TRUE(r.ratio);
    ASSERT_NEAR(*r.ratio, 2.0, 1e-9);
  }
}

TEST(GradStats, Examples) {
  MetricState s;
  const ParamVector g{3, 4};
  auto r = grad_stats(g, std::optional<std::span<const double>>(g), ParamVector{0, 0, 0}, s);
  EXPECT_EQ(r.grad_l2, 5.0);
  EXPECT_EQ(r.grad_l1, 7.0);
  EXPECT_EQ(r.param_l2, 0.0);
  EXPECT_EQ(*r.grad_std_running, 0.0);
  const ParamVector full{0, 0};
  r = grad_stats(g, std::optional<std::span<const double>>(full), ParamVector{1}, s);
  EXPECT_EQ(*r.grad_std_running, 2.5);
  r = grad_stats(g, std::nullopt, ParamVector{1}, s);
  EXPECT_EQ(*r.grad_std_running, 2.5);
}

TEST(GradStats, AbsentWithoutFullGradient) {
  MetricState s;
  EXPECT_FALSE(grad_stats(ParamVector{1}, std::nullopt, ParamVector{1}, s).grad_std_running.has_value());
}

TEST(EpochReset, ClearsOnlyEpochScopedState) {
  MetricState s;
  update_smooth_accumulators(s, 7, 0.99);
  update_gap_accumulators(s, -1, 0.99);
  s.cum_update_corr = -3;
  s.cum_update_corr_rs = -2;
  s.cum_loss_diff = -1;
  s.ratio_num_sum = 4;
  s.ratio_den_sum = 2;
  s.grad_dev_sum = 5;
  s.grad_dev_count = 2;
  epoch_reset(s);
  EXPECT_FALSE(s.avg_gap().has_value());
  EXPECT_FALSE(s.exp_gap.value().has_value());
  EXPECT_FALSE(s.max_smooth.has_value());
  EXPECT_FALSE(s.exp_smooth.value().has_value());
  EXPECT_EQ(s.cum_update_corr, -3);
  EXPECT_EQ(s.cum_update_corr_rs, -2);
  EXPECT_EQ(s.cum_loss_diff, -1);
  EXPECT_EQ(s.ratio_num_sum, 4);
  EXPECT_EQ(s.ratio_den_sum, 2);
  EXPECT_EQ(s.grad_dev_sum, 5);
  EXPECT_EQ(update_smooth_accumulators(s, 2, 0.99).max_smooth, 2.0);
}

TEST(EpochReset, WithoutResetMaxCarries) {
  MetricState s;
  update_smooth_accumulators(s, 7, 0.99);
  EXPECT_EQ(update_smooth_accumulators(s, 2, 0.99).max_smooth, 7.0);
}

// Expectation under s ~ Exp(1) of g(s) by exp-sinh quadrature on [0, inf).
template <class G>
double exp1_expectation(G g) {
  boost::math::quadrature::exp_sinh<double> integrator;
  // Polynomial growth times e^{-s}; past s = 700 the weight underflows to 0.
  return integrator.integrate([&](double s) { return s > 700.0 ? 0.0 : g(s) * std::exp(-s); });
}

TEST(RsIdentity, QuadratureOracle) {
  struct Case {
    Scalar f;
    double x, delta;
  };
  const std::vector<Case> cases = {
      {kHalfSquare, 1.0, -0.5},
      {Scalar([](double x) { return 3 * x * x - x + 2; }, [](double x) { return 6 * x - 1; }), -0.4, 1.3},
      {Scalar([](double x) { return x * x * x - 2 * x; }, [](double x) { return 3 * x * x - 2; }), 0.7, -0.3},
      {Scalar([](double x) { return -x * x * x + x * x; }, [](double x) { return -3 * x * x + 2 * x; }), -1.0, 0.8},
  };
  for (const auto& c : cases) {
    const auto F = [&](double v) { return c.f.evaluate(ParamVector{v}, any_batch()).loss; };
    const auto dF = [&](double v) { return c.f.evaluate(ParamVector{v}, any_batch()).grad[0]; };
    const double corr = exp1_expectation([&](double s) { return dF(c.x + s * c.delta) * c.delta; });
    const double diff = exp1_expectation([&](double s) { return F(c.x + s * c.delta) - F(c.x); });
    EXPECT_NEAR(corr, diff, 1e-6) << "x=" << c.x << " delta=" << c.delta;
  }
  const double worked = exp1_expectation([](double s) { return (1.0 - 0.5 * s) * -0.5; });
  EXPECT_NEAR(worked, -0.25, 1e-12);
}

TEST(RsIdentity, MonteCarloWithinThreeStandardErrors) {
  ScalingPolicy p(ScalingMode::exp1, 17);
  const auto est = rs_identity_estimate(kHalfSquare, ParamVector{1.0}, ParamVector{-0.5}, any_batch(), p, 100000);
  EXPECT_LE(std::abs(est.mean_corr - (-0.25)), 3 * est.se_corr);
  EXPECT_LE(std::abs(est.mean_diff - (-0.25)), 3 * est.se_diff);
  EXPECT_LE(std::abs(est.mean_corr - est.mean_diff), 3 * est.se_gap);
}

TEST(Fields, NamesRoundTrip) {
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    const auto f = field_from_name(kFieldNames[i]);
    ASSERT_TRUE(f);
    EXPECT_EQ(static_cast<std::size_t>(*f), i);
  }
  EXPECT_FALSE(field_from_name("learning_rte"));
}

TEST(MetricConfig, Validation) {
  MetricConfig c;
  EXPECT_NO_THROW(c.validate());
  c.ema_beta = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.ema_beta = 0.5;
  c.cadence = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}
