#pragma once

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "optdiag/checkpoint.hpp"
#include "optdiag/config.hpp"
#include "optdiag/metrics.hpp"
#include "optdiag/optimizers.hpp"
#include "optdiag/runlog.hpp"
#include "optdiag/sharpness.hpp"
#include "optdiag/tasks.hpp"

namespace optdiag {

inline Dataset load_dataset(const TaskConfig& task, std::uint64_t data_seed) {
  switch (task.source) {
    case DataSource::least_squares: return gen_synthetic(SyntheticKind::least_squares, task.n, task.d, task.noise, data_seed);
    case DataSource::logistic_blobs:
      return gen_synthetic(SyntheticKind::logistic_blobs, task.n, task.d, task.noise, data_seed);
    case DataSource::isotropic_quadratic:
      return gen_synthetic(SyntheticKind::isotropic_quadratic, task.n, task.d, task.noise, data_seed);
    case DataSource::libsvm: return load_libsvm(task.path);
  }
  throw ConfigError("unknown dataset source");
}

inline ModelSpec model_spec_for(const ExperimentConfig& cfg, const Dataset& data) {
  ModelSpec spec;
  spec.kind = cfg.task.model;
  spec.input_dim = data.d;
  spec.classes = std::max(cfg.task.classes, data.num_classes);
  spec.hidden = cfg.task.model == ModelKind::mlp_tanh ? cfg.task.hidden : std::vector<std::size_t>{};
  spec.seed = cfg.run.init_seed;
  spec.validate();
  return spec;
}

inline Optimizer make_optimizer(const OptimizerConfig& o, std::size_t dim) {
  switch (o.kind) {
    case OptimizerKind::gd: return Optimizer::gd();
    case OptimizerKind::sgdm: return Optimizer::sgdm(dim, o.momentum, o.lr);
    case OptimizerKind::adamw: return Optimizer::adamw(AdamwState(dim, o.lr, o.beta1, o.beta2, o.eps, o.weight_decay));
  }
  throw ConfigError("unknown optimizer kind");
}

inline std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

// Paths of the files a run writes into its output directory.
struct RunFiles {
  std::string csv, jsonl, checkpoint, timing;

  static RunFiles in(const std::string& dir, const std::string& name) {
    if (dir.empty()) return {};
    const auto base = (std::filesystem::path(dir) / name).string();
    return {base + ".csv", base + ".jsonl", base + ".ckpt", base + ".timing.json"};
  }
};

// Extra inputs a protocol can hand to a run without going through files.
struct RunOverrides {
  std::optional<ParamVector> x_star;
  std::string x_star_label;
};

/// Trains per `cfg` while measuring every enabled quantity.
///
/// Per step t: draw z_t, evaluate f and grad f at x_t on z_t. On record steps
/// (t % cadence == 0) also evaluate at x_{t-1} (and x* when the reference is
/// fixed) on the same z_t and fill the record. Then Delta_t from the optimizer,
/// s_t from the scaling policy, x_{t+1} = x_t + s_t Delta_t.
///
/// A numerical-input error stops the run; the step and message land in
/// `RunLog::abort` and in the JSONL tail. When `cfg.run.output_dir` is set the
/// records are streamed to `<name>.csv` / `<name>.jsonl` and the final iterate
/// is written to `<name>.ckpt`.
///
/// `run_experiment_with` runs the same loop over a caller-supplied objective
/// for `data` (tests use it to observe every evaluation).
template <StochasticObjective Obj>
RunLog run_experiment_with(const ExperimentConfig& cfg, const Obj& obj, const Dataset& data, const ModelSpec& spec,
                           const RunOverrides& overrides = {}) {
  validate_config(cfg, false);
  const auto started = std::chrono::steady_clock::now();
  const std::size_t dim = obj.dim();
  if (dim != spec.param_count()) throw ContractViolation("run: objective dimension does not match the model");
  const std::size_t batch_size = cfg.run.batch_size ? std::min(*cfg.run.batch_size, data.n) : data.n;
  const std::size_t per_epoch = batches_per_epoch(data.n, batch_size);
  const std::size_t total_steps = cfg.run.steps ? *cfg.run.steps : *cfg.run.epochs * per_epoch;
  const Batch full_batch = Batch::full(data.n);
  const MetricConfig mcfg = cfg.metrics.metric_config();

  MetricState state;
  if (overrides.x_star) {
    state.x_star = overrides.x_star;
  } else if (cfg.run.x_star_path) {
    state.x_star = load_checkpoint(*cfg.run.x_star_path, spec.digest(), dim).values;
  }
  if (mcfg.reference == Reference::fixed_point && !state.x_star) {
    throw ConfigError("metrics.reference = fixed_point needs a reference point");
  }

  RunLog log;
  log.meta.name = cfg.run.name;
  log.meta.config_digest = config_digest(cfg);
  log.meta.dataset = data.name;
  log.meta.model = spec.canonical();
  log.meta.optimizer = detail::enum_to_string(detail::kOptimizerNames, cfg.optimizer.kind);
  log.meta.scaling = detail::enum_to_string(detail::kScalingNames, cfg.optimizer.scaling);
  log.meta.reference = detail::enum_to_string(detail::kReferenceNames, cfg.metrics.reference);
  log.meta.dim = dim;
  log.meta.total_steps = total_steps;
  log.meta.cadence = cfg.metrics.cadence;
  log.meta.full_eval = detail::schedule_to_string(cfg.metrics.full_eval);
  log.meta.sharpness = detail::schedule_to_string(cfg.metrics.sharpness);
  log.meta.epoch_reset = cfg.metrics.epoch_reset;
  if (state.x_star) log.meta.x_star = overrides.x_star ? overrides.x_star_label : *cfg.run.x_star_path;

  const RunFiles files = RunFiles::in(cfg.run.output_dir, cfg.run.name);
  if (!cfg.run.output_dir.empty()) std::filesystem::create_directories(cfg.run.output_dir);
  RecordWriter writer(files.csv, files.jsonl, log.meta);

  Schedule sched;
  sched.kind = cfg.schedule.kind;
  sched.base_lr = cfg.optimizer.lr;
  sched.warmup_steps = cfg.schedule.warmup_steps;
  sched.total_steps = std::max<std::size_t>(total_steps, 1);
  sched.decay_period = cfg.schedule.decay_period;
  sched.decay_factor = cfg.schedule.decay_factor;

  Optimizer opt = make_optimizer(cfg.optimizer, dim);
  ScalingPolicy scaling(cfg.optimizer.scaling, cfg.run.optimizer_seed);
  const SharpnessConfig sharp_cfg{cfg.metrics.sharpness_max_iters, cfg.metrics.sharpness_rel_tol,
                                  cfg.metrics.sharpness_seed};

  ParamVector x = init_params(spec);
  ParamVector prev_x;
  ParamVector prev_delta;
  double prev_scale = 1.0;
  bool has_prev = false;
  std::optional<std::size_t> last_full_epoch, last_sharp_epoch;

  const auto due = [](const EvalSchedule& s, std::size_t step, std::size_t epoch, std::optional<std::size_t>& last) {
    switch (s.mode) {
      case EvalSchedule::Mode::off: return false;
      case EvalSchedule::Mode::every: return step % s.every == 0;
      case EvalSchedule::Mode::epoch:
        if (last && *last == epoch) return false;
        last = epoch;
        return true;
    }
    return false;
  };

  std::size_t t = 0;
  try {
    for (std::size_t epoch = 0; t < total_steps; ++epoch) {
      if (epoch > 0 && mcfg.epoch_reset) epoch_reset(state);
      const auto batches = make_batches(data.n, batch_size, cfg.run.shuffle, cfg.run.data_seed, epoch);
      for (const Batch& batch : batches) {
        if (t >= total_steps) break;
        const Evaluation at_x = obj.evaluate(x, batch);
        const bool record_step = t % mcfg.cadence == 0;
        MetricRecord rec;

        if (record_step) {
          rec.step = t;
          rec.epoch = epoch;
          rec.batch_digest = batch_digest(batch);
          rec[Field::loss] = at_x.loss;

          std::optional<Evaluation> at_prev;
          if (has_prev) {
            at_prev = obj.evaluate(prev_x, batch);
            const Correlations c = correlations_from(at_x, at_prev->loss, prev_delta, prev_scale);
            rec[Field::update_corr] = c.update_corr;
            rec[Field::update_corr_rs] = c.update_corr_rs;
            rec[Field::loss_diff] = c.loss_diff;
            state.cum_update_corr += c.update_corr;
            state.cum_update_corr_rs += c.update_corr_rs;
            state.cum_loss_diff += c.loss_diff;
          }
          rec[Field::cum_update_corr] = state.cum_update_corr;
          rec[Field::cum_update_corr_rs] = state.cum_update_corr_rs;
          rec[Field::cum_loss_diff] = state.cum_loss_diff;

          // Gap and smoothness against y_t.
          std::optional<Evaluation> at_ref;
          const ParamVector* ref = nullptr;
          if (mcfg.reference == Reference::prev_iterate && has_prev) {
            at_ref = at_prev;
            ref = &prev_x;
          } else if (mcfg.reference == Reference::fixed_point) {
            at_ref = obj.evaluate(*state.x_star, batch);
            ref = &*state.x_star;
          }
          if (ref) {
            const double gap = convexity_gap(at_x, at_ref->loss, x, *ref);
            update_gap_accumulators(state, gap, mcfg.ema_beta);
            rec[Field::inst_gap] = gap;
            if (auto sm = smoothness(at_x.grad, at_ref->grad, x, *ref, mcfg.zero_disp_epsilon)) {
              update_smooth_accumulators(state, *sm, mcfg.ema_beta);
              rec[Field::inst_smooth] = *sm;
            }
          }
          rec[Field::avg_gap] = state.avg_gap();
          rec[Field::exp_gap] = state.exp_gap.value();
          rec[Field::max_smooth] = state.max_smooth;
          rec[Field::exp_smooth] = state.exp_smooth.value();

          // Full-dataset quantities.
          std::optional<Evaluation> full;
          if (due(cfg.metrics.full_eval, t, epoch, last_full_epoch)) {
            full = obj.evaluate(x, full_batch);
            if (state.x_star) {
              if (!state.full_loss_at_star) state.full_loss_at_star = obj.evaluate(*state.x_star, full_batch).loss;
              const RatioResult rr = ratio_accumulate_from(*full, x, state, *state.full_loss_at_star);
              rec[Field::convexity_ratio] = rr.ratio;
              rec[Field::ratio_den_sign] = static_cast<double>(rr.denominator_sign);
            }
          }
          const GradStats gs =
              grad_stats(at_x.grad, full ? std::optional<std::span<const double>>(full->grad) : std::nullopt, x, state);
          rec[Field::grad_l1] = gs.grad_l1;
          rec[Field::grad_l2] = gs.grad_l2;
          rec[Field::grad_std_running] = gs.grad_std_running;
          rec[Field::param_l2] = gs.param_l2;

          if (due(cfg.metrics.sharpness, t, epoch, last_sharp_epoch)) {
            rec[Field::sharpness] = power_iteration_lambda_max(obj, x, full_batch, sharp_cfg).lambda;
          }
        }

        const double eta_t = schedule_lr(sched, t);
        ParamVector delta = opt.step(at_x.grad, eta_t, x);
        const double s_t = sample_scale(scaling);
        prev_x = x;
        for (std::size_t i = 0; i < dim; ++i) x[i] += s_t * delta[i];
        require_finite(x, "iterate");
        prev_delta = std::move(delta);
        prev_scale = s_t;
        has_prev = true;

        if (record_step) {
          rec[Field::eta_t] = eta_t;
          rec[Field::s_t] = s_t;
          writer.write(rec);
          log.records.push_back(rec);
        }
        ++t;
      }
    }
  } catch (const NumericalInputError& e) {
    log.abort = RunAbort{t, e.kind(), e.what()};
    writer.write_abort(*log.abort);
  }

  log.final_x = x;
  if (!files.checkpoint.empty() && !log.abort) save_checkpoint(files.checkpoint, Checkpoint{spec.digest(), x});
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!files.timing.empty()) {
    std::ofstream(files.timing) << "{\"wall_seconds\":" << log.wall_seconds << "}\n";
  }
  return log;
}

inline RunLog run_experiment(const ExperimentConfig& cfg, const RunOverrides& overrides = {}) {
  validate_config(cfg, false);
  const Dataset data = load_dataset(cfg.task, cfg.run.data_seed);
  const ModelSpec spec = model_spec_for(cfg, data);
  return run_experiment_with(cfg, ModelObjective(spec, data), data, spec, overrides);
}

// ---------------------------------------------------------------------------
// Protocols

struct RatioProtocolResult {
  RunLog phase1;
  RunLog phase2;
};

/// Two-phase convexity-ratio measurement: phase 1 trains to completion and its
/// final iterate becomes x*; phase 2 repeats the run from the same seeds with
/// y_t = x* and ratio accumulation at the full-evaluation points.
inline RatioProtocolResult run_ratio_protocol(const ExperimentConfig& cfg) {
  if (cfg.run.x_star_path) throw ConfigError("ratio protocol computes x* itself; remove run.x_star_path");
  if (cfg.metrics.full_eval.mode == EvalSchedule::Mode::off) {
    throw ConfigError("ratio protocol needs metrics.full_eval enabled");
  }
  ExperimentConfig p1 = cfg;
  p1.run.name = cfg.run.name + "_phase1";
  p1.metrics.reference = Reference::prev_iterate;
  RatioProtocolResult out;
  out.phase1 = run_experiment(p1);
  if (out.phase1.abort) {
    throw ProtocolError("ratio protocol: phase 1 aborted at step " + std::to_string(out.phase1.abort->step) + ": " +
                        out.phase1.abort->message);
  }

  ExperimentConfig p2 = cfg;
  p2.run.name = cfg.run.name + "_phase2";
  p2.metrics.reference = Reference::fixed_point;
  RunOverrides ov;
  ov.x_star = out.phase1.final_x;
  ov.x_star_label = cfg.run.output_dir.empty() ? p1.run.name : RunFiles::in(cfg.run.output_dir, p1.run.name).checkpoint;
  out.phase2 = run_experiment(p2, ov);
  return out;
}

struct RsAbResult {
  RunLog without_rs;
  RunLog with_rs;
};

/// Same run twice, differing only in the scaling policy (none vs Exp(1)).
/// Data, init and optimizer seeds are shared; the scaling draws use their own
/// stream, so both runs see the same batch sequence.
inline RsAbResult run_rs_ab(const ExperimentConfig& cfg) {
  ExperimentConfig off = cfg;
  off.optimizer.scaling = ScalingMode::none;
  off.run.name = cfg.run.name + "_rs_off";
  ExperimentConfig on = cfg;
  on.optimizer.scaling = ScalingMode::exp1;
  on.run.name = cfg.run.name + "_rs_on";
  return {run_experiment(off), run_experiment(on)};
}

// One independent run per learning rate; runs execute concurrently.
inline std::vector<RunLog> run_sweep(const ExperimentConfig& cfg, const std::vector<double>& learning_rates) {
  if (learning_rates.empty()) throw ConfigError("sweep: empty learning-rate list");
  std::vector<std::future<RunLog>> jobs;
  for (double lr : learning_rates) {
    if (!(lr > 0.0)) throw ConfigError("sweep: learning rates must be > 0");
    ExperimentConfig c = cfg;
    c.optimizer.lr = lr;
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, lr).ptr;  // shortest round-trip form
    c.run.name = cfg.run.name + "_lr" + std::string(buf, end);
    jobs.push_back(std::async(std::launch::async, [c] { return run_experiment(c); }));
  }
  std::vector<RunLog> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

}  // namespace optdiag
