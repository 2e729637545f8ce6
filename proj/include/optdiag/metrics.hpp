#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "optdiag/core.hpp"
#include "optdiag/optimizers.hpp"

namespace optdiag {

enum class Reference { prev_iterate, fixed_point };

struct MetricConfig {
  double ema_beta = 0.99;
  std::size_t cadence = 1;
  bool epoch_reset = true;
  Reference reference = Reference::prev_iterate;
  double zero_disp_epsilon = 1e-12;

  void validate() const {
    if (!(ema_beta > 0.0 && ema_beta < 1.0)) throw ConfigError("metrics.ema_beta must lie in (0, 1)");
    if (cadence < 1) throw ConfigError("metrics.cadence must be >= 1");
    if (!(zero_disp_epsilon >= 0.0)) throw ConfigError("metrics.zero_disp_epsilon must be >= 0");
  }
};

// Exponential moving average that starts at its first observation.
class Ema {
 public:
  double update(double v, double beta) {
    value_ = value_ ? beta * *value_ + (1.0 - beta) * v : v;
    return *value_;
  }
  void reset() { value_.reset(); }
  std::optional<double> value() const { return value_; }

 private:
  std::optional<double> value_;
};

struct MetricState {
  // Epoch-scoped accumulators (cleared by epoch_reset).
  double gap_sum = 0.0;
  std::size_t gap_count = 0;
  Ema exp_gap;
  std::optional<double> max_smooth;
  Ema exp_smooth;

  // Trajectory-scoped accumulators (never reset).
  double ratio_num_sum = 0.0;
  double ratio_den_sum = 0.0;
  double cum_update_corr = 0.0;
  double cum_update_corr_rs = 0.0;
  double cum_loss_diff = 0.0;
  double grad_dev_sum = 0.0;
  std::size_t grad_dev_count = 0;

  // Reference point for the global measures; F(x*) is cached on first use.
  std::optional<ParamVector> x_star;
  std::optional<double> full_loss_at_star;

  std::optional<double> avg_gap() const {
    if (gap_count == 0) return std::nullopt;
    return gap_sum / static_cast<double>(gap_count);
  }
};

// ---------------------------------------------------------------------------
// Convexity gap

// f(x, z) - f(y, z) - <grad f(x, z), x - y> from already evaluated points.
inline double convexity_gap(const Evaluation& at_x, double loss_at_y, std::span<const double> x,
                            std::span<const double> y) {
  require_finite(at_x.loss, "inst_gap loss");
  require_finite(loss_at_y, "inst_gap loss");
  return at_x.loss - loss_at_y - inner_product(at_x.grad, subtract(x, y));
}

template <StochasticObjective Obj>
double inst_gap(const Obj& obj, std::span<const double> x, std::span<const double> y, const Batch& batch) {
  const Evaluation ex = obj.evaluate(x, batch);
  const Evaluation ey = obj.evaluate(y, batch);
  return convexity_gap(ex, ey.loss, x, y);
}

struct GapAverages {
  double avg_gap;
  double exp_gap;
};

inline GapAverages update_gap_accumulators(MetricState& state, double gap, double beta) {
  require_finite(gap, "update_gap_accumulators");
  state.gap_sum += gap;
  state.gap_count += 1;
  const double e = state.exp_gap.update(gap, beta);
  return {*state.avg_gap(), e};
}

// ---------------------------------------------------------------------------
// Smoothness

// |grad f(x) - grad f(y)| / |x - y|, or nothing when |x - y| < eps.
inline std::optional<double> smoothness(std::span<const double> grad_x, std::span<const double> grad_y,
                                        std::span<const double> x, std::span<const double> y, double eps) {
  require_finite(grad_x, "inst_smooth gradient");
  require_finite(grad_y, "inst_smooth gradient");
  const double dx = norm(subtract(x, y));
  if (dx < eps || dx == 0.0) return std::nullopt;
  return norm(subtract(grad_x, grad_y)) / dx;
}

template <StochasticObjective Obj>
std::optional<double> inst_smooth(const Obj& obj, std::span<const double> x, std::span<const double> y,
                                  const Batch& batch, double eps = 1e-12) {
  if (norm(subtract(x, y)) < eps) return std::nullopt;
  const Evaluation ex = obj.evaluate(x, batch);
  const Evaluation ey = obj.evaluate(y, batch);
  return smoothness(ex.grad, ey.grad, x, y, eps);
}

struct SmoothAggregates {
  double max_smooth;
  double exp_smooth;
};

inline SmoothAggregates update_smooth_accumulators(MetricState& state, double smooth, double beta) {
  require_finite(smooth, "update_smooth_accumulators");
  if (smooth < 0.0) throw ContractViolation("update_smooth_accumulators: smoothness must be >= 0");
  state.max_smooth = state.max_smooth ? std::max(*state.max_smooth, smooth) : smooth;
  const double e = state.exp_smooth.update(smooth, beta);
  return {*state.max_smooth, e};
}

// ---------------------------------------------------------------------------
// Update correlations
//
// With z_t the fresh batch drawn after the move x_{t-1} -> x_t:
//   update_corr    = <grad f(x_t, z_t), x_t - x_{t-1}>  (x_t - x_{t-1} = s_{t-1} Delta_{t-1})
//   update_corr_rs = <grad f(x_t, z_t), Delta_{t-1}>
//   loss_diff      = f(x_t, z_t) - f(x_{t-1}, z_t)

struct Correlations {
  double update_corr;
  double update_corr_rs;
  double loss_diff;
};

// The displacement is taken as s_{t-1} * Delta_{t-1}, the move the optimizer
// applied, so that s == 1 makes the two correlations coincide bitwise.
inline Correlations correlations_from(const Evaluation& at_curr, double loss_at_prev,
                                      std::span<const double> delta_prev, double scale_prev) {
  require_finite(at_curr.loss, "update_correlations loss");
  require_finite(loss_at_prev, "update_correlations loss");
  const double rs = inner_product(at_curr.grad, delta_prev);
  const double corr = scale_prev == 1.0 ? rs : inner_product(at_curr.grad, scaled(scale_prev, delta_prev));
  return {corr, rs, at_curr.loss - loss_at_prev};
}

template <StochasticObjective Obj>
Correlations update_correlations(const Obj& obj, std::span<const double> x_prev, std::span<const double> x_curr,
                                 std::span<const double> delta_prev, double scale_prev, const Batch& batch_curr) {
  const Evaluation ec = obj.evaluate(x_curr, batch_curr);
  const Evaluation ep = obj.evaluate(x_prev, batch_curr);
  return correlations_from(ec, ep.loss, delta_prev, scale_prev);
}

// ---------------------------------------------------------------------------
// Convexity ratio

struct RatioResult {
  std::optional<double> ratio;
  int denominator_sign = 0;
};

// Accumulates <grad F(x_t), x_t - x*> and F(x_t) - F(x*) from a full-dataset
// evaluation at x_t and returns their running ratio.
inline RatioResult ratio_accumulate_from(const Evaluation& full_at_x, std::span<const double> x, MetricState& state,
                                         double full_loss_at_star) {
  if (!state.x_star) throw ConfigError("convexity ratio needs a reference point x*");
  state.ratio_num_sum += inner_product(full_at_x.grad, subtract(x, *state.x_star));
  state.ratio_den_sum += full_at_x.loss - full_loss_at_star;
  RatioResult r;
  r.denominator_sign = (state.ratio_den_sum > 0.0) - (state.ratio_den_sum < 0.0);
  if (std::abs(state.ratio_den_sum) >= 1e-12 * (1.0 + std::abs(full_loss_at_star))) {
    r.ratio = state.ratio_num_sum / state.ratio_den_sum;
  }
  return r;
}

template <StochasticObjective Obj>
RatioResult ratio_accumulate(const Obj& obj_full, const Batch& full_batch, std::span<const double> x,
                             MetricState& state) {
  if (!state.x_star) throw ConfigError("convexity ratio needs a reference point x*");
  if (!state.full_loss_at_star) state.full_loss_at_star = obj_full.evaluate(*state.x_star, full_batch).loss;
  const Evaluation e = obj_full.evaluate(x, full_batch);
  return ratio_accumulate_from(e, x, state, *state.full_loss_at_star);
}

// ---------------------------------------------------------------------------
// Gradient statistics

struct GradStats {
  double grad_l1;
  double grad_l2;
  std::optional<double> grad_std_running;
  double param_l2;
};

inline GradStats grad_stats(std::span<const double> grad_batch, std::optional<std::span<const double>> grad_full,
                            std::span<const double> x, MetricState& state) {
  GradStats s{norm(grad_batch, NormOrder::L1), norm(grad_batch, NormOrder::L2), std::nullopt, norm(x)};
  if (grad_full) {
    state.grad_dev_sum += norm(subtract(grad_batch, *grad_full));
    state.grad_dev_count += 1;
  }
  if (state.grad_dev_count > 0) s.grad_std_running = state.grad_dev_sum / static_cast<double>(state.grad_dev_count);
  return s;
}

// Start-of-epoch reset of the epoch-scoped averages only.
inline void epoch_reset(MetricState& state) {
  state.gap_sum = 0.0;
  state.gap_count = 0;
  state.exp_gap.reset();
  state.max_smooth.reset();
  state.exp_smooth.reset();
}

// ---------------------------------------------------------------------------
// Random-scaling identity probe:
//   E_s[F(x + s Delta) - F(x)] = E_s <grad F(x + s Delta), Delta>,  s ~ Exp(1).
// Monte-Carlo means of both sides plus their standard errors.

struct RsIdentityEstimate {
  double mean_corr = 0.0;
  double mean_diff = 0.0;
  double se_corr = 0.0;
  double se_diff = 0.0;
  double se_gap = 0.0;  // standard error of the paired difference corr - diff
  std::size_t draws = 0;
};

template <StochasticObjective Obj>
RsIdentityEstimate rs_identity_estimate(const Obj& obj, std::span<const double> x, std::span<const double> delta,
                                        const Batch& batch, ScalingPolicy& policy, std::size_t draws) {
  if (draws < 2) throw ContractViolation("rs_identity_estimate: need at least two draws");
  const double f0 = obj.evaluate(x, batch).loss;
  double sc = 0, sc2 = 0, sd = 0, sd2 = 0, sg = 0, sg2 = 0;
  for (std::size_t k = 0; k < draws; ++k) {
    const double s = sample_scale(policy);
    const Evaluation e = obj.evaluate(add_scaled(x, s, delta), batch);
    const double c = inner_product(e.grad, delta);
    const double d = e.loss - f0;
    sc += c;
    sc2 += c * c;
    sd += d;
    sd2 += d * d;
    sg += c - d;
    sg2 += (c - d) * (c - d);
  }
  const double n = static_cast<double>(draws);
  const auto se = [n](double s1, double s2) {
    const double var = std::max(0.0, (s2 - s1 * s1 / n) / (n - 1.0));
    return std::sqrt(var / n);
  };
  return {sc / n, sd / n, se(sc, sc2), se(sd, sd2), se(sg, sg2), draws};
}

// ---------------------------------------------------------------------------
// One row of measurements.

enum class Field : std::size_t {
  loss,
  eta_t,
  s_t,
  inst_gap,
  avg_gap,
  exp_gap,
  inst_smooth,
  max_smooth,
  exp_smooth,
  update_corr,
  update_corr_rs,
  loss_diff,
  cum_update_corr,
  cum_update_corr_rs,
  cum_loss_diff,
  convexity_ratio,
  ratio_den_sign,
  grad_l1,
  grad_l2,
  grad_std_running,
  param_l2,
  sharpness,
  count_
};

inline constexpr std::size_t kFieldCount = static_cast<std::size_t>(Field::count_);

inline constexpr std::array<std::string_view, kFieldCount> kFieldNames = {
    "loss",           "eta_t",           "s_t",           "inst_gap",        "avg_gap",
    "exp_gap",        "inst_smooth",     "max_smooth",    "exp_smooth",      "update_corr",
    "update_corr_rs", "loss_diff",       "cum_update_corr", "cum_update_corr_rs", "cum_loss_diff",
    "convexity_ratio", "ratio_den_sign", "grad_l1",       "grad_l2",         "grad_std_running",
    "param_l2",       "sharpness"};

inline std::optional<Field> field_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    if (kFieldNames[i] == name) return static_cast<Field>(i);
  }
  return std::nullopt;
}

struct MetricRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t batch_digest = 0;
  std::array<std::optional<double>, kFieldCount> values{};

  std::optional<double>& operator[](Field f) { return values[static_cast<std::size_t>(f)]; }
  const std::optional<double>& operator[](Field f) const { return values[static_cast<std::size_t>(f)]; }

  bool operator==(const MetricRecord&) const = default;
};

}  // namespace optdiag
