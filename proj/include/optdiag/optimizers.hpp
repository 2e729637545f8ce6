#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <variant>

#include "optdiag/core.hpp"
#include "optdiag/rng.hpp"

namespace optdiag {

// Every optimizer here returns the update direction Delta_t and leaves the
// move to the caller: x_{t+1} = x_t + s_t * Delta_t.

inline ParamVector gd_step(std::span<const double> grad, double eta_t) {
  require_finite(grad, "gd_step gradient");
  if (!(eta_t > 0.0)) throw ContractViolation("gd_step: eta_t must be > 0");
  return scaled(-eta_t, grad);
}

// Delta-state momentum variant: Delta_t = beta * (Delta_{t-1} - eta_t * g_t).
struct SgdmState {
  ParamVector delta;
  double beta = 0.9;
  double eta = 0.1;

  SgdmState() = default;
  SgdmState(std::size_t dim, double beta_, double eta_) : delta(dim, 0.0), beta(beta_), eta(eta_) {}
};

inline ParamVector sgdm_step(SgdmState& state, std::span<const double> grad, double eta_t) {
  require_finite(grad, "sgdm_step gradient");
  if (grad.size() != state.delta.size()) throw ContractViolation("sgdm_step: dimension mismatch");
  if (!(eta_t > 0.0)) throw ContractViolation("sgdm_step: eta_t must be > 0");
  for (std::size_t i = 0; i < grad.size(); ++i) state.delta[i] = state.beta * (state.delta[i] - eta_t * grad[i]);
  return state.delta;
}

struct AdamwState {
  ParamVector m;
  ParamVector v;
  std::uint64_t t = 0;
  double b1 = 0.9;
  double b2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double eta = 1e-3;

  AdamwState() = default;
  AdamwState(std::size_t dim, double eta_, double b1_ = 0.9, double b2_ = 0.999, double eps_ = 1e-8, double wd = 0.0)
      : m(dim, 0.0), v(dim, 0.0), b1(b1_), b2(b2_), eps(eps_), weight_decay(wd), eta(eta_) {}
};

// Bias-corrected Adam direction plus decoupled weight decay, both inside
// Delta_t so that random scaling multiplies the whole displacement.
inline ParamVector adamw_step(AdamwState& s, std::span<const double> grad, double eta_t, std::span<const double> x) {
  require_finite(grad, "adamw_step gradient");
  if (grad.size() != s.m.size() || x.size() != s.m.size()) throw ContractViolation("adamw_step: dimension mismatch");
  if (!(eta_t > 0.0)) throw ContractViolation("adamw_step: eta_t must be > 0");
  s.t += 1;
  const double c1 = 1.0 - std::pow(s.b1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.b2, static_cast<double>(s.t));
  ParamVector delta(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    s.m[i] = s.b1 * s.m[i] + (1.0 - s.b1) * grad[i];
    s.v[i] = s.b2 * s.v[i] + (1.0 - s.b2) * grad[i] * grad[i];
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    delta[i] = -eta_t * (mhat / (std::sqrt(vhat) + s.eps) + s.weight_decay * x[i]);
  }
  return delta;
}

// ---------------------------------------------------------------------------
// Random scaling

enum class ScalingMode { none, exp1 };

struct ScalingPolicy {
  ScalingMode mode = ScalingMode::none;
  CounterRng rng{0, "scaling"};

  ScalingPolicy() = default;
  ScalingPolicy(ScalingMode m, std::uint64_t seed) : mode(m), rng(seed, "scaling") {}
};

// s_t: 1 when scaling is off, otherwise Exp(1) by inverse CDF (one draw).
inline double sample_scale(ScalingPolicy& policy) {
  if (policy.mode == ScalingMode::none) return 1.0;
  const double u = policy.rng.uniform01();
  return -std::log1p(-u);
}

// ---------------------------------------------------------------------------
// Learning-rate schedules

enum class ScheduleKind { constant, cosine, linear_decay, step_decay };

struct Schedule {
  ScheduleKind kind = ScheduleKind::constant;
  double base_lr = 0.1;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
  std::size_t decay_period = 1;  // step_decay: steps between drops
  double decay_factor = 10.0;    // step_decay: divisor per drop
};

inline double schedule_lr(const Schedule& s, std::size_t t) {
  if (t >= s.total_steps) {
    throw ContractViolation("schedule_lr: step " + std::to_string(t) + " outside [0, " +
                            std::to_string(s.total_steps) + ")");
  }
  if (t < s.warmup_steps) {
    return s.base_lr * static_cast<double>(t + 1) / static_cast<double>(s.warmup_steps);
  }
  const std::size_t since = t - s.warmup_steps;
  const std::size_t span = s.total_steps > s.warmup_steps ? s.total_steps - s.warmup_steps : 1;
  const double progress = static_cast<double>(since) / static_cast<double>(span);
  switch (s.kind) {
    case ScheduleKind::constant: return s.base_lr;
    case ScheduleKind::cosine: return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    case ScheduleKind::linear_decay: return s.base_lr * (1.0 - progress);
    case ScheduleKind::step_decay: {
      const auto drops = static_cast<double>(since / (s.decay_period ? s.decay_period : 1));
      return s.base_lr * std::pow(s.decay_factor, -drops);
    }
  }
  return s.base_lr;
}

// ---------------------------------------------------------------------------

enum class OptimizerKind { gd, sgdm, adamw };

// Owns the state of whichever algorithm a run uses.
class Optimizer {
 public:
  static Optimizer gd() { return Optimizer(std::monostate{}); }
  static Optimizer sgdm(std::size_t dim, double beta, double eta) { return Optimizer(SgdmState(dim, beta, eta)); }
  static Optimizer adamw(AdamwState s) { return Optimizer(std::move(s)); }

  OptimizerKind kind() const {
    if (std::holds_alternative<SgdmState>(state_)) return OptimizerKind::sgdm;
    if (std::holds_alternative<AdamwState>(state_)) return OptimizerKind::adamw;
    return OptimizerKind::gd;
  }

  ParamVector step(std::span<const double> grad, double eta_t, std::span<const double> x) {
    if (auto* s = std::get_if<SgdmState>(&state_)) return sgdm_step(*s, grad, eta_t);
    if (auto* s = std::get_if<AdamwState>(&state_)) return adamw_step(*s, grad, eta_t, x);
    return gd_step(grad, eta_t);
  }

 private:
  using State = std::variant<std::monostate, SgdmState, AdamwState>;
  explicit Optimizer(State s) : state_(std::move(s)) {}
  State state_;
};

}  // namespace optdiag
