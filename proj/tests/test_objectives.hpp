// Small closed-form objectives for tests. None of them depend on the batch.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "optdiag/core.hpp"

namespace optdiag::testing {

// f(x) = 1/2 (x - c)^T A (x - c) with dense symmetric A.
class Quadratic {
 public:
  Quadratic(std::vector<std::vector<double>> a, ParamVector c = {}) : a_(std::move(a)), c_(std::move(c)) {
    if (c_.empty()) c_.assign(a_.size(), 0.0);
  }
  static Quadratic diag(std::vector<double> d) {
    std::vector<std::vector<double>> a(d.size(), std::vector<double>(d.size(), 0.0));
    for (std::size_t i = 0; i < d.size(); ++i) a[i][i] = d[i];
    return Quadratic(std::move(a));
  }

  std::size_t dim() const { return a_.size(); }

  Evaluation evaluate(std::span<const double> x, const Batch&) const {
    const std::size_t d = dim();
    Evaluation e{0.0, ParamVector(d, 0.0)};
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) e.grad[i] += a_[i][j] * (x[j] - c_[j]);
    }
    for (std::size_t i = 0; i < d; ++i) e.loss += 0.5 * (x[i] - c_[i]) * e.grad[i];
    return e;
  }

  ParamVector apply(std::span<const double> v) const {
    ParamVector out(dim(), 0.0);
    for (std::size_t i = 0; i < dim(); ++i) {
      for (std::size_t j = 0; j < dim(); ++j) out[i] += a_[i][j] * v[j];
    }
    return out;
  }

 private:
  std::vector<std::vector<double>> a_;
  ParamVector c_;
};

// f(x) = <w, x> + b
class Linear {
 public:
  Linear(ParamVector w, double b = 0.0) : w_(std::move(w)), b_(b) {}
  std::size_t dim() const { return w_.size(); }
  Evaluation evaluate(std::span<const double> x, const Batch&) const {
    double s = b_;
    for (std::size_t i = 0; i < dim(); ++i) s += w_[i] * x[i];
    return {s, w_};
  }

 private:
  ParamVector w_;
  double b_;
};

// One-dimensional f given as a (value, derivative) pair.
class Scalar {
 public:
  Scalar(std::function<double(double)> f, std::function<double(double)> df) : f_(std::move(f)), df_(std::move(df)) {}
  std::size_t dim() const { return 1; }
  Evaluation evaluate(std::span<const double> x, const Batch&) const { return {f_(x[0]), {df_(x[0])}}; }

 private:
  std::function<double(double)> f_, df_;
};

static_assert(StochasticObjective<Quadratic>);
static_assert(StochasticObjective<Linear>);
static_assert(StochasticObjective<Scalar>);

inline Batch any_batch() { return Batch::full(1); }

// Symmetric matrix Q diag(eigs) Q^T with Q from Gram-Schmidt on Gaussian columns.
template <class Rng>
std::vector<std::vector<double>> random_symmetric(const std::vector<double>& eigs, Rng& rng) {
  const std::size_t d = eigs.size();
  std::vector<ParamVector> q;
  while (q.size() < d) {
    ParamVector v(d);
    for (double& e : v) e = rng.normal();
    for (const auto& u : q) {
      const double p = inner_product(v, u);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
    }
    const double n = norm(v);
    if (n < 1e-8) continue;
    for (double& e : v) e /= n;
    q.push_back(std::move(v));
  }
  std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) a[i][j] += eigs[k] * q[k][i] * q[k][j];
    }
  }
  return a;
}

}  // namespace optdiag::testing
