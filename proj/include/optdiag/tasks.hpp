#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "optdiag/core.hpp"
#include "optdiag/rng.hpp"

namespace optdiag {

// Dense dataset. For classification `num_classes` > 0 and labels hold class
// ids; for regression `num_classes` == 0 and labels are real targets.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> features;  // row-major n x d
  std::vector<double> labels;
  std::size_t num_classes = 0;
  std::string name;
  // Generating weights for synthetic regression data (empty otherwise).
  ParamVector truth;

  std::span<const double> row(std::size_t i) const { return {features.data() + i * d, d}; }

  std::size_t class_of(std::size_t i) const { return static_cast<std::size_t>(labels[i]); }

  void validate() const {
    if (n < 1 || d < 1) throw ContractViolation("dataset: need n >= 1 and d >= 1");
    if (features.size() != n * d || labels.size() != n) throw ContractViolation("dataset: storage size mismatch");
    require_finite(features, "dataset features");
    require_finite(labels, "dataset labels");
    if (num_classes > 0) {
      for (double y : labels) {
        if (y < 0 || y >= static_cast<double>(num_classes) || y != std::floor(y)) {
          throw ContractViolation("dataset: class label out of range");
        }
      }
    }
  }
};

enum class SyntheticKind { least_squares, logistic_blobs, isotropic_quadratic };

namespace detail {

inline std::string format_real(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace detail

// Seeded synthetic datasets.
//  - least_squares: x_i, w* ~ N(0, I); y = X w* + noise * xi.
//  - logistic_blobs: two Gaussian clouds at +-u (u = 1/sqrt(d) * ones) with
//    per-coordinate spread `noise`; labels are fair coin flips.
//  - isotropic_quadratic: rows sqrt(d) e_i, targets sqrt(d) c with c ~ N(0, I),
//    so the full-batch squared loss is exactly 1/2 |w - c|^2. Requires n == d.
inline Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t d, double noise, std::uint64_t seed) {
  if (n < 1 || d < 1) throw ContractViolation("gen_synthetic: need n >= 1 and d >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ContractViolation("gen_synthetic: noise must be finite and >= 0");

  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.features.resize(n * d);
  ds.labels.resize(n);
  CounterRng rng(seed, "synthetic");

  switch (kind) {
    case SyntheticKind::least_squares: {
      ds.truth.resize(d);
      for (double& w : ds.truth) w = rng.normal();
      for (std::size_t i = 0; i < n; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double v = rng.normal();
          ds.features[i * d + j] = v;
          y += v * ds.truth[j];
        }
        ds.labels[i] = y + noise * rng.normal();
      }
      ds.name = "least_squares";
      break;
    }
    case SyntheticKind::logistic_blobs: {
      const double center = 1.0 / std::sqrt(static_cast<double>(d));
      for (std::size_t i = 0; i < n; ++i) {
        const bool positive = (rng.next_u64() >> 63) != 0;
        const double sign = positive ? 1.0 : -1.0;
        for (std::size_t j = 0; j < d; ++j) ds.features[i * d + j] = sign * center + noise * rng.normal();
        ds.labels[i] = positive ? 1.0 : 0.0;
      }
      ds.num_classes = 2;
      ds.name = "logistic_blobs";
      break;
    }
    case SyntheticKind::isotropic_quadratic: {
      if (n != d) throw ContractViolation("gen_synthetic: isotropic_quadratic needs n == d");
      const double scale = std::sqrt(static_cast<double>(d));
      ds.truth.resize(d);
      for (std::size_t i = 0; i < d; ++i) {
        ds.truth[i] = rng.normal();
        ds.features[i * d + i] = scale;
        ds.labels[i] = scale * ds.truth[i];
      }
      ds.name = "isotropic_quadratic";
      break;
    }
  }
  ds.name += "(n=" + std::to_string(n) + ",d=" + std::to_string(d) + ",noise=" + detail::format_real(noise) +
             ",seed=" + std::to_string(seed) + ")";
  ds.validate();
  return ds;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Parses LibSVM text ("label idx:val idx:val ...", 1-based indices) from a
// stream into a dense dataset. Labels are remapped to class ids in order of
// first appearance; the mapping is recorded in `name`.
inline Dataset parse_libsvm(std::istream& in, const std::string& source = "libsvm") {
  struct Entry {
    std::size_t row, col;
    double value;
  };
  std::vector<Entry> entries;
  std::vector<std::string> class_names;
  std::map<std::string, std::size_t> class_ids;
  std::vector<double> labels;
  std::size_t max_index = 0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view rest = detail::trim(line);
    if (rest.empty() || rest.front() == '#') continue;
    const auto fail = [&](const std::string& why) -> ParseError {
      return ParseError(source + ": line " + std::to_string(line_no) + ": " + why);
    };

    std::istringstream tokens{std::string(rest)};
    std::string label;
    tokens >> label;
    auto [it, inserted] = class_ids.emplace(label, class_names.size());
    if (inserted) class_names.push_back(label);
    const std::size_t row = labels.size();
    labels.push_back(static_cast<double>(it->second));

    std::string tok;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) {
        throw fail("malformed feature token '" + tok + "'");
      }
      std::size_t idx = 0;
      double val = 0.0;
      const char* b = tok.data();
      const char* c = tok.data() + colon;
      const char* e = tok.data() + tok.size();
      auto r1 = std::from_chars(b, c, idx);
      if (r1.ec != std::errc{} || r1.ptr != c || idx == 0) throw fail("bad feature index in '" + tok + "'");
      auto r2 = std::from_chars(c + 1, e, val);
      if (r2.ec != std::errc{} || r2.ptr != e) throw fail("bad feature value in '" + tok + "'");
      if (!std::isfinite(val)) throw fail("non-finite feature value in '" + tok + "'");
      max_index = std::max(max_index, idx);
      entries.push_back({row, idx - 1, val});
    }
  }
  if (labels.empty()) throw ParseError(source + ": empty dataset");
  if (max_index == 0) throw ParseError(source + ": no features");

  Dataset ds;
  ds.n = labels.size();
  ds.d = max_index;
  ds.features.assign(ds.n * ds.d, 0.0);
  for (const Entry& e : entries) ds.features[e.row * ds.d + e.col] = e.value;
  ds.labels = std::move(labels);
  ds.num_classes = class_names.size();
  ds.name = source + " classes[";
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    if (k) ds.name += ",";
    ds.name += class_names[k] + "->" + std::to_string(k);
  }
  ds.name += "] preprocessing=none";
  ds.validate();
  return ds;
}

inline Dataset load_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_libsvm: cannot open " + path);
  return parse_libsvm(in, path);
}

inline void write_libsvm(std::ostream& out, const Dataset& ds) {
  out.precision(17);
  for (std::size_t i = 0; i < ds.n; ++i) {
    out << ds.labels[i];
    for (std::size_t j = 0; j < ds.d; ++j) {
      const double v = ds.features[i * ds.d + j];
      if (v != 0.0) out << ' ' << (j + 1) << ':' << v;
    }
    out << '\n';
  }
}

// Partition of a (seed, epoch)-deterministic permutation into batches; the
// last batch may be short.
inline std::vector<Batch> make_batches(std::size_t n, std::size_t batch_size, bool shuffle_rows, std::uint64_t seed,
                                       std::size_t epoch) {
  if (batch_size < 1 || batch_size > n) throw ContractViolation("make_batches: need 1 <= batch_size <= n");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle_rows) {
    CounterRng rng(seed, fnv1a("shuffle") + epoch);
    shuffle(std::span<std::size_t>(order), rng);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0, k = 0; start < n; start += batch_size, ++k) {
    Batch b;
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    b.epoch = epoch;
    b.step_in_epoch = k;
    out.push_back(std::move(b));
  }
  return out;
}

inline std::uint64_t batch_digest(const Batch& b) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i : b.indices) h = mix64(h ^ static_cast<std::uint64_t>(i));
  return h;
}

// ---------------------------------------------------------------------------
// Models

enum class ModelKind { squared_linear, logistic, mlp_tanh };

struct ModelSpec {
  ModelKind kind = ModelKind::squared_linear;
  std::size_t input_dim = 1;
  std::size_t classes = 0;  // ignored for squared_linear
  std::vector<std::size_t> hidden;  // mlp_tanh only
  std::uint64_t seed = 0;

  // Layer widths input -> hidden... -> classes (logistic and mlp_tanh).
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim};
    if (kind == ModelKind::mlp_tanh) w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(classes);
    return w;
  }

  std::size_t param_count() const {
    if (kind == ModelKind::squared_linear) return input_dim;
    const auto w = widths();
    std::size_t p = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) p += w[l + 1] * w[l] + w[l + 1];
    return p;
  }

  // Canonical text form; its digest tags checkpoints.
  std::string canonical() const {
    std::string s = kind == ModelKind::squared_linear ? "squared_linear" : kind == ModelKind::logistic ? "logistic" : "mlp_tanh";
    s += ";d=" + std::to_string(input_dim);
    if (kind != ModelKind::squared_linear) s += ";C=" + std::to_string(classes);
    if (kind == ModelKind::mlp_tanh) {
      s += ";hidden=";
      for (std::size_t i = 0; i < hidden.size(); ++i) s += (i ? "," : "") + std::to_string(hidden[i]);
    }
    return s;
  }

  std::uint64_t digest() const { return fnv1a(canonical()); }

  void validate() const {
    if (input_dim < 1) throw ContractViolation("model: input_dim must be >= 1");
    if (kind != ModelKind::squared_linear && classes < 2) throw ContractViolation("model: classes must be >= 2");
    if (kind == ModelKind::mlp_tanh) {
      if (hidden.empty()) throw ContractViolation("model: mlp_tanh needs at least one hidden layer");
      for (std::size_t h : hidden) {
        if (h < 1) throw ContractViolation("model: hidden widths must be >= 1");
      }
    }
  }
};

// Initial parameters. Linear models start at zero; the MLP draws every weight
// and bias uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline ParamVector init_params(const ModelSpec& spec) {
  spec.validate();
  ParamVector x(spec.param_count(), 0.0);
  if (spec.kind != ModelKind::mlp_tanh) return x;
  CounterRng rng(spec.seed, "init");
  const auto w = spec.widths();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w[l]));
    const std::size_t count = w[l + 1] * w[l] + w[l + 1];
    for (std::size_t k = 0; k < count; ++k) x[off + k] = rng.uniform(-bound, bound);
    off += count;
  }
  return x;
}

namespace detail {

// Softmax cross-entropy for one example. Writes p - e_y into `dlogits`.
inline double softmax_xent(std::span<const double> logits, std::size_t label, std::span<double> dlogits) {
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    dlogits[k] = std::exp(logits[k] - mx);
    sum += dlogits[k];
  }
  for (std::size_t k = 0; k < logits.size(); ++k) dlogits[k] /= sum;
  dlogits[label] -= 1.0;
  return std::log(sum) + mx - logits[label];
}

}  // namespace detail

// Mean loss over a batch of `data` for model `spec`, with closed-form gradient.
class ModelObjective {
 public:
  ModelObjective(ModelSpec spec, const Dataset& data) : spec_(std::move(spec)), data_(&data) {
    spec_.validate();
    if (spec_.input_dim != data.d) throw ContractViolation("model input_dim does not match dataset dimension");
    if (spec_.kind != ModelKind::squared_linear) {
      if (data.num_classes == 0) throw ContractViolation("classification model needs a labelled dataset");
      if (spec_.classes < data.num_classes) throw ContractViolation("model has fewer classes than the dataset");
    }
  }

  std::size_t dim() const { return spec_.param_count(); }
  const ModelSpec& spec() const { return spec_; }
  const Dataset& data() const { return *data_; }

  Evaluation evaluate(std::span<const double> x, const Batch& batch) const {
    if (x.size() != dim()) throw ContractViolation("objective: parameter dimension mismatch");
    if (batch.indices.empty()) throw ContractViolation("objective: empty batch");
    for (std::size_t i : batch.indices) {
      if (i >= data_->n) throw ContractViolation("objective: batch index out of range");
    }
    switch (spec_.kind) {
      case ModelKind::squared_linear: return eval_squared(x, batch);
      case ModelKind::logistic:
      case ModelKind::mlp_tanh: return eval_network(x, batch);
    }
    return {};
  }

 private:
  Evaluation eval_squared(std::span<const double> x, const Batch& batch) const {
    const std::size_t d = data_->d;
    Evaluation out{0.0, ParamVector(d, 0.0)};
    for (std::size_t i : batch.indices) {
      const auto row = data_->row(i);
      double pred = 0.0;
      for (std::size_t j = 0; j < d; ++j) pred += x[j] * row[j];
      const double r = pred - data_->labels[i];
      out.loss += 0.5 * r * r;
      for (std::size_t j = 0; j < d; ++j) out.grad[j] += r * row[j];
    }
    finish(out, batch.indices.size(), "squared_linear output");
    return out;
  }

  // Dense tanh layers followed by a linear softmax layer. With no hidden
  // layers this is multinomial logistic regression.
  Evaluation eval_network(std::span<const double> x, const Batch& batch) const {
    const auto w = spec_.widths();
    const std::size_t layers = w.size() - 1;
    std::vector<std::size_t> offset(layers);
    for (std::size_t l = 0, off = 0; l < layers; ++l) {
      offset[l] = off;
      off += w[l + 1] * w[l] + w[l + 1];
    }

    Evaluation out{0.0, ParamVector(x.size(), 0.0)};
    std::vector<std::vector<double>> act(layers + 1);
    std::vector<double> delta, prev_delta;
    for (std::size_t l = 0; l <= layers; ++l) act[l].resize(w[l]);

    for (std::size_t i : batch.indices) {
      const auto row = data_->row(i);
      std::copy(row.begin(), row.end(), act[0].begin());
      for (std::size_t l = 0; l < layers; ++l) {
        const double* W = x.data() + offset[l];
        const double* b = W + w[l + 1] * w[l];
        for (std::size_t o = 0; o < w[l + 1]; ++o) {
          double z = b[o];
          for (std::size_t k = 0; k < w[l]; ++k) z += W[o * w[l] + k] * act[l][k];
          act[l + 1][o] = (l + 1 < layers) ? std::tanh(z) : z;
        }
        if (!all_finite(act[l + 1])) {
          throw NumericalInputError("objective: non-finite activation in layer " + std::to_string(l + 1));
        }
      }

      delta.assign(w[layers], 0.0);
      out.loss += detail::softmax_xent(act[layers], data_->class_of(i), delta);

      for (std::size_t l = layers; l-- > 0;) {
        double* gW = out.grad.data() + offset[l];
        double* gb = gW + w[l + 1] * w[l];
        for (std::size_t o = 0; o < w[l + 1]; ++o) {
          gb[o] += delta[o];
          for (std::size_t k = 0; k < w[l]; ++k) gW[o * w[l] + k] += delta[o] * act[l][k];
        }
        if (l == 0) break;
        const double* W = x.data() + offset[l];
        prev_delta.assign(w[l], 0.0);
        for (std::size_t o = 0; o < w[l + 1]; ++o) {
          for (std::size_t k = 0; k < w[l]; ++k) prev_delta[k] += W[o * w[l] + k] * delta[o];
        }
        for (std::size_t k = 0; k < w[l]; ++k) prev_delta[k] *= 1.0 - act[l][k] * act[l][k];
        delta.swap(prev_delta);
      }
    }
    finish(out, batch.indices.size(), "softmax output");
    return out;
  }

  static void finish(Evaluation& out, std::size_t count, const char* layer) {
    const double inv = 1.0 / static_cast<double>(count);
    out.loss *= inv;
    for (double& g : out.grad) g *= inv;
    if (!std::isfinite(out.loss) || !all_finite(out.grad)) {
      throw NumericalInputError(std::string("objective: non-finite value in ") + layer);
    }
  }

  ModelSpec spec_;
  const Dataset* data_;
};

static_assert(StochasticObjective<ModelObjective>);

}  // namespace optdiag
