#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "optdiag/core.hpp"
#include "optdiag/rng.hpp"

namespace optdiag {

struct SharpnessConfig {
  std::size_t max_iters = 100;
  double rel_tol = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iters < 1) throw ConfigError("sharpness: max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw ConfigError("sharpness: rel_tol must be > 0");
  }
};

struct SharpnessEstimate {
  double lambda = 0.0;  // Rayleigh quotient of the dominant (largest |.|) eigenvalue, sign kept
  std::size_t iters = 0;
  bool converged = false;
};

/// Power iteration on finite-difference Hessian-vector products of `obj` over
/// `batch` (the full dataset, for the training-loss sharpness).
///
/// Starts from a seeded random unit vector. If |Hv| collapses below 1e-14 the
/// start is redrawn, up to three times; after that the Hessian is treated as
/// zero and the estimate is 0 with `converged == false`.
template <StochasticObjective Obj>
SharpnessEstimate power_iteration_lambda_max(const Obj& obj, std::span<const double> x, const Batch& batch,
                                             const SharpnessConfig& cfg) {
  cfg.validate();
  constexpr int kRestarts = 3;
  constexpr double kCollapse = 1e-14;
  const std::size_t d = x.size();
  CounterRng rng(cfg.seed, "power_iteration");

  SharpnessEstimate out;
  for (int attempt = 0; attempt <= kRestarts; ++attempt) {
    ParamVector v(d);
    for (double& e : v) e = rng.normal();
    const double n0 = norm(v);
    for (double& e : v) e /= n0;

    ParamVector hv = hvp_finite_diff(obj, x, v, batch);
    double hv_norm = norm(hv);
    if (hv_norm < kCollapse) continue;

    double lambda = inner_product(v, hv);
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
      for (std::size_t i = 0; i < d; ++i) v[i] = hv[i] / hv_norm;
      hv = hvp_finite_diff(obj, x, v, batch);
      hv_norm = norm(hv);
      out.iters += 1;
      if (hv_norm < kCollapse) {
        lambda = 0.0;
        break;
      }
      const double next = inner_product(v, hv);
      const bool done = std::abs(next - lambda) < cfg.rel_tol * (1.0 + std::abs(next));
      lambda = next;
      if (done) {
        out.converged = true;
        break;
      }
    }
    out.lambda = lambda;
    return out;
  }
  out.lambda = 0.0;
  out.converged = false;
  return out;
}

}  // namespace optdiag
