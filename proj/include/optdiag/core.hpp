#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "optdiag/errors.hpp"

namespace optdiag {

// Flat parameter / gradient / update vector. Dimension is fixed for a run.
using ParamVector = std::vector<double>;

// A minibatch: row indices into a dataset plus its position in the stream.
struct Batch {
  std::vector<std::size_t> indices;
  std::size_t epoch = 0;
  std::size_t step_in_epoch = 0;

  static Batch full(std::size_t n) {
    Batch b;
    b.indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) b.indices[i] = i;
    return b;
  }
};

// Loss and gradient of f(x, z) at one point.
struct Evaluation {
  double loss = 0.0;
  ParamVector grad;
};

// f(x, z): anything that can evaluate a mean loss and its gradient on a batch.
template <class O>
concept StochasticObjective = requires(const O& obj, std::span<const double> x, const Batch& batch) {
  { obj.dim() } -> std::convertible_to<std::size_t>;
  { obj.evaluate(x, batch) } -> std::same_as<Evaluation>;
};

enum class NormOrder { L1, L2 };

namespace detail {

// Neumaier compensated accumulator. Order-dependent but deterministic.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline void check_same_dim(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ContractViolation(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
  }
}

}  // namespace detail

inline bool all_finite(std::span<const double> a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void require_finite(std::span<const double> a, const char* what) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) {
      throw NumericalInputError(std::string(what) + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalInputError(std::string(what) + ": non-finite value");
}

inline double inner_product(std::span<const double> a, std::span<const double> b) {
  detail::check_same_dim(a, b, "inner_product");
  require_finite(a, "inner_product");
  require_finite(b, "inner_product");
  detail::CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc.add(a[i] * b[i]);
  return acc.value();
}

inline double norm(std::span<const double> a, NormOrder order = NormOrder::L2) {
  require_finite(a, "norm");
  detail::CompensatedSum acc;
  if (order == NormOrder::L1) {
    for (double v : a) acc.add(std::abs(v));
    return acc.value();
  }
  for (double v : a) acc.add(v * v);
  return std::sqrt(acc.value());
}

// a - b
inline ParamVector subtract(std::span<const double> a, std::span<const double> b) {
  detail::check_same_dim(a, b, "subtract");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// a + s * b
inline ParamVector add_scaled(std::span<const double> a, double s, std::span<const double> b) {
  detail::check_same_dim(a, b, "add_scaled");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
  return out;
}

inline ParamVector scaled(double s, std::span<const double> a) {
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

// Hessian-vector product by central differences of the gradient:
//   (grad f(x + eps v) - grad f(x - eps v)) / (2 eps),
//   eps = sqrt(machine epsilon) * (1 + |x|) / |v|.
// Exact up to round-off when f is quadratic.
template <StochasticObjective Obj>
ParamVector hvp_finite_diff(const Obj& obj, std::span<const double> x, std::span<const double> v, const Batch& batch) {
  detail::check_same_dim(x, v, "hvp_finite_diff");
  const double vnorm = norm(v);
  if (!(vnorm > 0.0)) throw DegenerateDirectionError("hvp_finite_diff: zero direction");
  const double eps = std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + norm(x)) / vnorm;

  const ParamVector xp = add_scaled(x, eps, v);
  const ParamVector xm = add_scaled(x, -eps, v);
  const Evaluation ep = obj.evaluate(xp, batch);
  const Evaluation em = obj.evaluate(xm, batch);
  require_finite(ep.grad, "hvp_finite_diff gradient");
  require_finite(em.grad, "hvp_finite_diff gradient");

  ParamVector out(x.size());
  const double inv = 1.0 / (2.0 * eps);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (ep.grad[i] - em.grad[i]) * inv;
  return out;
}

}  // namespace optdiag
