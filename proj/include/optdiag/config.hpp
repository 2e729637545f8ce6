#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "optdiag/metrics.hpp"
#include "optdiag/optimizers.hpp"
#include "optdiag/rng.hpp"
#include "optdiag/tasks.hpp"

namespace optdiag {

enum class DataSource { least_squares, logistic_blobs, isotropic_quadratic, libsvm };

// When a costly measurement (full-dataset pass, power iteration) runs:
// never, on the first record of each epoch, or on records whose step is a
// multiple of `every`.
struct EvalSchedule {
  enum class Mode { off, epoch, every };
  Mode mode = Mode::off;
  std::size_t every = 1;

  bool operator==(const EvalSchedule&) const = default;
};

struct TaskConfig {
  ModelKind model = ModelKind::squared_linear;
  DataSource source = DataSource::least_squares;
  std::string path;  // libsvm only
  std::size_t n = 200;
  std::size_t d = 2;
  double noise = 0.1;
  std::vector<std::size_t> hidden;
  std::size_t classes = 0;  // 0: take from the dataset

  bool operator==(const TaskConfig&) const = default;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::gd;
  double lr = 0.1;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  ScalingMode scaling = ScalingMode::none;

  bool operator==(const OptimizerConfig&) const = default;
};

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::constant;
  std::size_t warmup_steps = 0;
  std::size_t decay_period = 1;
  double decay_factor = 10.0;

  bool operator==(const ScheduleConfig&) const = default;
};

struct MetricsConfig {
  double ema_beta = 0.99;
  std::size_t cadence = 1;
  bool epoch_reset = true;
  Reference reference = Reference::prev_iterate;
  double zero_disp_epsilon = 1e-12;
  EvalSchedule full_eval{EvalSchedule::Mode::epoch, 1};
  EvalSchedule sharpness{EvalSchedule::Mode::off, 1};
  std::size_t sharpness_max_iters = 100;
  double sharpness_rel_tol = 1e-4;
  std::uint64_t sharpness_seed = 0;

  MetricConfig metric_config() const { return {ema_beta, cadence, epoch_reset, reference, zero_disp_epsilon}; }

  bool operator==(const MetricsConfig&) const = default;
};

struct RunConfig {
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> batch_size;  // nullopt: full batch
  bool shuffle = true;
  std::uint64_t data_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t optimizer_seed = 0;
  std::optional<std::string> x_star_path;
  std::string output_dir;
  std::string name = "run";

  bool operator==(const RunConfig&) const = default;
};

struct ExperimentConfig {
  TaskConfig task;
  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  MetricsConfig metrics;
  RunConfig run;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<ModelKind> kModelNames[] = {
    {ModelKind::squared_linear, "squared_linear"}, {ModelKind::logistic, "logistic"}, {ModelKind::mlp_tanh, "mlp_tanh"}};
inline constexpr EnumName<DataSource> kSourceNames[] = {{DataSource::least_squares, "least_squares"},
                                                        {DataSource::logistic_blobs, "logistic_blobs"},
                                                        {DataSource::isotropic_quadratic, "isotropic_quadratic"},
                                                        {DataSource::libsvm, "libsvm"}};
inline constexpr EnumName<OptimizerKind> kOptimizerNames[] = {
    {OptimizerKind::gd, "gd"}, {OptimizerKind::sgdm, "sgdm"}, {OptimizerKind::adamw, "adamw"}};
inline constexpr EnumName<ScalingMode> kScalingNames[] = {{ScalingMode::none, "none"}, {ScalingMode::exp1, "exp1"}};
inline constexpr EnumName<ScheduleKind> kScheduleNames[] = {{ScheduleKind::constant, "constant"},
                                                            {ScheduleKind::cosine, "cosine"},
                                                            {ScheduleKind::linear_decay, "linear_decay"},
                                                            {ScheduleKind::step_decay, "step_decay"}};
inline constexpr EnumName<Reference> kReferenceNames[] = {{Reference::prev_iterate, "prev_iterate"},
                                                          {Reference::fixed_point, "fixed_point"}};

template <class E, std::size_t N>
const char* enum_to_string(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "?";
}

template <class E, std::size_t N>
E enum_from_string(const EnumName<E> (&table)[N], const std::string& key, const std::string& s) {
  for (const auto& e : table) {
    if (s == e.name) return e.value;
  }
  std::string allowed;
  for (const auto& e : table) allowed += std::string(allowed.empty() ? "" : "|") + e.name;
  throw ParseError("key '" + key + "': invalid value '" + s + "' (expected " + allowed + ")");
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc{} || r.ptr != e || !std::isfinite(v)) {
    throw ParseError("key '" + key + "': expected a real number, got '" + s + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc{} || r.ptr != e) {
    throw ParseError("key '" + key + "': expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return false;
  throw ParseError("key '" + key + "': expected a boolean, got '" + s + "'");
}

inline std::vector<std::size_t> parse_uint_list(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw ParseError("key '" + key + "': empty list element");
    out.push_back(static_cast<std::size_t>(parse_uint(key, item.substr(b, e - b + 1))));
  }
  return out;
}

inline EvalSchedule parse_schedule(const std::string& key, const std::string& s) {
  if (s == "off") return {EvalSchedule::Mode::off, 1};
  if (s == "epoch") return {EvalSchedule::Mode::epoch, 1};
  const auto every = parse_uint(key, s);
  if (every < 1) throw ParseError("key '" + key + "': must be off, epoch or an integer >= 1");
  return {EvalSchedule::Mode::every, static_cast<std::size_t>(every)};
}

inline std::string schedule_to_string(const EvalSchedule& s) {
  switch (s.mode) {
    case EvalSchedule::Mode::off: return "off";
    case EvalSchedule::Mode::epoch: return "epoch";
    case EvalSchedule::Mode::every: return std::to_string(s.every);
  }
  return "off";
}

// Reads the keys of one section, rejecting any key it does not know.
class SectionReader {
 public:
  SectionReader(const boost::property_tree::ptree& root, std::string section) : section_(std::move(section)) {
    if (auto child = root.get_child_optional(section_)) node_ = &*child;
  }

  std::optional<std::string> take(const std::string& key) {
    known_.insert(key);
    if (!node_) return std::nullopt;
    auto v = node_->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return *v;
  }

  std::string require(const std::string& key) {
    auto v = take(key);
    if (!v) throw ParseError("missing required key '" + qualified(key) + "'");
    return *v;
  }

  std::string qualified(const std::string& key) const { return section_ + "." + key; }

  void reject_unknown() const {
    if (!node_) return;
    for (const auto& [k, _] : *node_) {
      if (!known_.count(k)) throw ParseError("unknown key '" + k + "' in section [" + section_ + "]");
    }
  }

 private:
  std::string section_;
  const boost::property_tree::ptree* node_ = nullptr;
  std::set<std::string> known_;
};

}  // namespace detail

inline void validate_config(const ExperimentConfig& c, bool check_files = true) {
  namespace fs = std::filesystem;
  if (c.task.source == DataSource::libsvm) {
    if (c.task.path.empty()) throw ParseError("key 'task.path' is required for dataset = libsvm");
    if (check_files && !fs::exists(c.task.path)) throw ParseError("key 'task.path': file not found: " + c.task.path);
  } else {
    if (c.task.n < 1) throw ParseError("key 'task.n' must be >= 1");
    if (c.task.d < 1) throw ParseError("key 'task.d' must be >= 1");
    if (c.task.source == DataSource::isotropic_quadratic && c.task.n != c.task.d) {
      throw ParseError("key 'task.n' must equal task.d for dataset = isotropic_quadratic");
    }
  }
  if (!(c.task.noise >= 0.0)) throw ParseError("key 'task.noise' must be >= 0");
  if (c.task.model == ModelKind::mlp_tanh && c.task.hidden.empty()) {
    throw ParseError("key 'task.hidden' is required for model = mlp_tanh");
  }
  for (std::size_t h : c.task.hidden) {
    if (h < 1) throw ParseError("key 'task.hidden': widths must be >= 1");
  }
  if (!(c.optimizer.lr > 0.0)) throw ParseError("key 'optimizer.lr' must be > 0");
  if (!(c.optimizer.momentum >= 0.0 && c.optimizer.momentum < 1.0)) {
    throw ParseError("key 'optimizer.momentum' must lie in [0, 1)");
  }
  if (!(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0)) throw ParseError("key 'optimizer.beta1' must lie in [0, 1)");
  if (!(c.optimizer.beta2 >= 0.0 && c.optimizer.beta2 < 1.0)) throw ParseError("key 'optimizer.beta2' must lie in [0, 1)");
  if (!(c.optimizer.eps > 0.0)) throw ParseError("key 'optimizer.eps' must be > 0");
  if (!(c.optimizer.weight_decay >= 0.0)) throw ParseError("key 'optimizer.weight_decay' must be >= 0");
  if (c.schedule.decay_period < 1) throw ParseError("key 'schedule.decay_period' must be >= 1");
  if (!(c.schedule.decay_factor > 0.0)) throw ParseError("key 'schedule.decay_factor' must be > 0");
  if (!(c.metrics.ema_beta > 0.0 && c.metrics.ema_beta < 1.0)) throw ParseError("key 'metrics.ema_beta' must lie in (0, 1)");
  if (c.metrics.cadence < 1) throw ParseError("key 'metrics.cadence' must be >= 1");
  if (!(c.metrics.zero_disp_epsilon >= 0.0)) throw ParseError("key 'metrics.zero_disp_epsilon' must be >= 0");
  if (c.metrics.sharpness_max_iters < 1) throw ParseError("key 'metrics.sharpness_max_iters' must be >= 1");
  if (!(c.metrics.sharpness_rel_tol > 0.0)) throw ParseError("key 'metrics.sharpness_rel_tol' must be > 0");
  if (c.run.epochs.has_value() == c.run.steps.has_value()) {
    throw ParseError("exactly one of 'run.epochs' and 'run.steps' is required");
  }
  if (c.run.batch_size && *c.run.batch_size < 1) throw ParseError("key 'run.batch_size' must be >= 1 or 'full'");
  if (c.run.name.empty()) throw ParseError("key 'run.name' must not be empty");
  if (c.run.x_star_path && check_files && !fs::exists(*c.run.x_star_path)) {
    throw ParseError("key 'run.x_star_path': file not found: " + *c.run.x_star_path);
  }
}

/// Parses an INI-style document with sections [task], [optimizer], [schedule],
/// [metrics] and [run]. Every default is made explicit in the returned value.
/// Relative file paths are resolved against `base_dir` when it is non-empty.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {},
                                     bool check_files = true) {
  namespace pt = boost::property_tree;
  pt::ptree root;
  try {
    std::istringstream in(text);
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  static const std::set<std::string> kSections = {"task", "optimizer", "schedule", "metrics", "run"};
  for (const auto& [k, v] : root) {
    if (!kSections.count(k)) {
      throw ParseError(v.empty() ? "key '" + k + "' must be inside a section" : "unknown section [" + k + "]");
    }
  }

  using namespace detail;
  const auto resolve = [&](const std::string& p) {
    if (base_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (base_dir / p).lexically_normal().string();
  };

  ExperimentConfig c;
  {
    SectionReader s(root, "task");
    c.task.model = enum_from_string(kModelNames, s.qualified("model"), s.require("model"));
    c.task.source = enum_from_string(kSourceNames, s.qualified("dataset"), s.require("dataset"));
    if (auto v = s.take("path")) c.task.path = resolve(*v);
    if (auto v = s.take("n")) c.task.n = parse_uint(s.qualified("n"), *v);
    if (auto v = s.take("d")) c.task.d = parse_uint(s.qualified("d"), *v);
    if (auto v = s.take("noise")) c.task.noise = parse_double(s.qualified("noise"), *v);
    if (auto v = s.take("hidden")) c.task.hidden = v->empty() ? std::vector<std::size_t>{} : parse_uint_list(s.qualified("hidden"), *v);
    if (auto v = s.take("classes")) c.task.classes = parse_uint(s.qualified("classes"), *v);
    s.reject_unknown();
  }
  {
    SectionReader s(root, "optimizer");
    c.optimizer.kind = enum_from_string(kOptimizerNames, s.qualified("kind"), s.require("kind"));
    c.optimizer.lr = parse_double(s.qualified("lr"), s.require("lr"));
    if (auto v = s.take("momentum")) c.optimizer.momentum = parse_double(s.qualified("momentum"), *v);
    if (auto v = s.take("beta1")) c.optimizer.beta1 = parse_double(s.qualified("beta1"), *v);
    if (auto v = s.take("beta2")) c.optimizer.beta2 = parse_double(s.qualified("beta2"), *v);
    if (auto v = s.take("eps")) c.optimizer.eps = parse_double(s.qualified("eps"), *v);
    if (auto v = s.take("weight_decay")) c.optimizer.weight_decay = parse_double(s.qualified("weight_decay"), *v);
    if (auto v = s.take("scaling")) c.optimizer.scaling = enum_from_string(kScalingNames, s.qualified("scaling"), *v);
    s.reject_unknown();
  }
  {
    SectionReader s(root, "schedule");
    if (auto v = s.take("kind")) c.schedule.kind = enum_from_string(kScheduleNames, s.qualified("kind"), *v);
    if (auto v = s.take("warmup_steps")) c.schedule.warmup_steps = parse_uint(s.qualified("warmup_steps"), *v);
    if (auto v = s.take("decay_period")) c.schedule.decay_period = parse_uint(s.qualified("decay_period"), *v);
    if (auto v = s.take("decay_factor")) c.schedule.decay_factor = parse_double(s.qualified("decay_factor"), *v);
    s.reject_unknown();
  }
  {
    SectionReader s(root, "metrics");
    if (auto v = s.take("ema_beta")) c.metrics.ema_beta = parse_double(s.qualified("ema_beta"), *v);
    if (auto v = s.take("cadence")) c.metrics.cadence = parse_uint(s.qualified("cadence"), *v);
    if (auto v = s.take("epoch_reset")) c.metrics.epoch_reset = parse_bool(s.qualified("epoch_reset"), *v);
    if (auto v = s.take("reference")) c.metrics.reference = enum_from_string(kReferenceNames, s.qualified("reference"), *v);
    if (auto v = s.take("zero_disp_epsilon")) c.metrics.zero_disp_epsilon = parse_double(s.qualified("zero_disp_epsilon"), *v);
    if (auto v = s.take("full_eval")) c.metrics.full_eval = parse_schedule(s.qualified("full_eval"), *v);
    if (auto v = s.take("sharpness")) c.metrics.sharpness = parse_schedule(s.qualified("sharpness"), *v);
    if (auto v = s.take("sharpness_max_iters")) c.metrics.sharpness_max_iters = parse_uint(s.qualified("sharpness_max_iters"), *v);
    if (auto v = s.take("sharpness_rel_tol")) c.metrics.sharpness_rel_tol = parse_double(s.qualified("sharpness_rel_tol"), *v);
    if (auto v = s.take("sharpness_seed")) c.metrics.sharpness_seed = parse_uint(s.qualified("sharpness_seed"), *v);
    s.reject_unknown();
  }
  {
    SectionReader s(root, "run");
    if (auto v = s.take("epochs")) c.run.epochs = parse_uint(s.qualified("epochs"), *v);
    if (auto v = s.take("steps")) c.run.steps = parse_uint(s.qualified("steps"), *v);
    if (auto v = s.take("batch_size")) {
      if (*v != "full") c.run.batch_size = parse_uint(s.qualified("batch_size"), *v);
    }
    if (auto v = s.take("shuffle")) c.run.shuffle = parse_bool(s.qualified("shuffle"), *v);
    c.run.data_seed = parse_uint(s.qualified("data_seed"), s.require("data_seed"));
    c.run.init_seed = parse_uint(s.qualified("init_seed"), s.require("init_seed"));
    c.run.optimizer_seed = parse_uint(s.qualified("optimizer_seed"), s.require("optimizer_seed"));
    if (auto v = s.take("x_star_path")) {
      if (!v->empty()) c.run.x_star_path = resolve(*v);
    }
    if (auto v = s.take("output_dir")) c.run.output_dir = v->empty() ? *v : resolve(*v);
    if (auto v = s.take("name")) c.run.name = *v;
    s.reject_unknown();
  }
  validate_config(c, check_files);
  if (c.metrics.reference == Reference::fixed_point && !c.run.x_star_path) {
    throw ParseError("key 'metrics.reference' = fixed_point needs 'run.x_star_path'");
  }
  return c;
}

// Canonical document with every key written out.
inline std::string emit_config(const ExperimentConfig& c) {
  using namespace detail;
  std::ostringstream os;
  os << "[task]\n";
  os << "model = " << enum_to_string(kModelNames, c.task.model) << "\n";
  os << "dataset = " << enum_to_string(kSourceNames, c.task.source) << "\n";
  if (!c.task.path.empty()) os << "path = " << c.task.path << "\n";
  os << "n = " << c.task.n << "\n";
  os << "d = " << c.task.d << "\n";
  os << "noise = " << format_double(c.task.noise) << "\n";
  os << "hidden = ";
  for (std::size_t i = 0; i < c.task.hidden.size(); ++i) os << (i ? "," : "") << c.task.hidden[i];
  os << "\n";
  os << "classes = " << c.task.classes << "\n";

  os << "\n[optimizer]\n";
  os << "kind = " << enum_to_string(kOptimizerNames, c.optimizer.kind) << "\n";
  os << "lr = " << format_double(c.optimizer.lr) << "\n";
  os << "momentum = " << format_double(c.optimizer.momentum) << "\n";
  os << "beta1 = " << format_double(c.optimizer.beta1) << "\n";
  os << "beta2 = " << format_double(c.optimizer.beta2) << "\n";
  os << "eps = " << format_double(c.optimizer.eps) << "\n";
  os << "weight_decay = " << format_double(c.optimizer.weight_decay) << "\n";
  os << "scaling = " << enum_to_string(kScalingNames, c.optimizer.scaling) << "\n";

  os << "\n[schedule]\n";
  os << "kind = " << enum_to_string(kScheduleNames, c.schedule.kind) << "\n";
  os << "warmup_steps = " << c.schedule.warmup_steps << "\n";
  os << "decay_period = " << c.schedule.decay_period << "\n";
  os << "decay_factor = " << format_double(c.schedule.decay_factor) << "\n";

  os << "\n[metrics]\n";
  os << "ema_beta = " << format_double(c.metrics.ema_beta) << "\n";
  os << "cadence = " << c.metrics.cadence << "\n";
  os << "epoch_reset = " << (c.metrics.epoch_reset ? "true" : "false") << "\n";
  os << "reference = " << enum_to_string(kReferenceNames, c.metrics.reference) << "\n";
  os << "zero_disp_epsilon = " << format_double(c.metrics.zero_disp_epsilon) << "\n";
  os << "full_eval = " << schedule_to_string(c.metrics.full_eval) << "\n";
  os << "sharpness = " << schedule_to_string(c.metrics.sharpness) << "\n";
  os << "sharpness_max_iters = " << c.metrics.sharpness_max_iters << "\n";
  os << "sharpness_rel_tol = " << format_double(c.metrics.sharpness_rel_tol) << "\n";
  os << "sharpness_seed = " << c.metrics.sharpness_seed << "\n";

  os << "\n[run]\n";
  if (c.run.epochs) os << "epochs = " << *c.run.epochs << "\n";
  if (c.run.steps) os << "steps = " << *c.run.steps << "\n";
  os << "batch_size = " << (c.run.batch_size ? std::to_string(*c.run.batch_size) : std::string("full")) << "\n";
  os << "shuffle = " << (c.run.shuffle ? "true" : "false") << "\n";
  os << "data_seed = " << c.run.data_seed << "\n";
  os << "init_seed = " << c.run.init_seed << "\n";
  os << "optimizer_seed = " << c.run.optimizer_seed << "\n";
  if (c.run.x_star_path) os << "x_star_path = " << *c.run.x_star_path << "\n";
  os << "output_dir = " << c.run.output_dir << "\n";
  os << "name = " << c.run.name << "\n";
  return os.str();
}

// Digest of the canonical document. The output directory is where results go,
// not part of the experiment, so it is left out.
inline std::string config_digest(const ExperimentConfig& c) {
  ExperimentConfig copy = c;
  copy.run.output_dir.clear();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(emit_config(copy))));
  return buf;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, bool check_files = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path(), check_files);
}

}  // namespace optdiag
