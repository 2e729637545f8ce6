// optdiag command-line front end.
//
//   optdiag run <config>
//   optdiag ratio <config>
//   optdiag rs-ab <config>
//   optdiag sweep <config> --lr 0.1,0.01
//   optdiag plot <log...> --fields a,b --scale linear|symlog --out chart.svg
//
// OPTDIAG_OUTPUT_DIR overrides run.output_dir. On failure a single JSON line
// {"error": <kind>, "message": ...} goes to stderr and the exit code is 1.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "optdiag/optdiag.hpp"

namespace {

using namespace optdiag;

ExperimentConfig load(const std::string& path) {
  ExperimentConfig cfg = load_config(path);
  if (const char* dir = std::getenv("OPTDIAG_OUTPUT_DIR"); dir && *dir) cfg.run.output_dir = dir;
  if (cfg.run.output_dir.empty()) cfg.run.output_dir = ".";
  return cfg;
}

void summarize(const RunLog& log) {
  std::cout << log.meta.name << ": " << log.records.size() << " records";
  if (!log.records.empty()) {
    const auto& last = log.records.back();
    if (last[Field::loss]) std::cout << ", final loss " << *last[Field::loss];
  }
  if (log.abort) std::cout << ", ABORTED at step " << log.abort->step;
  std::cout << "\n";
}

int report(const char* kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
  return 1;
}

int fail_if_aborted(const RunLog& log) {
  if (!log.abort) return 0;
  return report(log.abort->kind.c_str(), "run '" + log.meta.name + "' aborted at step " +
                                             std::to_string(log.abort->step) + ": " + log.abort->message);
}

std::vector<double> parse_lr_list(const std::string& s) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(detail::parse_double("--lr", item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimizer diagnostics: train small models and measure convexity, smoothness and update correlations"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("config", config_path, "Config file")->required();
  auto* ratio = app.add_subcommand("ratio", "Two-phase convexity-ratio protocol");
  ratio->add_option("config", config_path, "Config file")->required();
  auto* rsab = app.add_subcommand("rs-ab", "Paired runs with and without random scaling");
  rsab->add_option("config", config_path, "Config file")->required();

  std::string lr_list;
  auto* sweep = app.add_subcommand("sweep", "Independent runs over a list of learning rates");
  sweep->add_option("config", config_path, "Config file")->required();
  sweep->add_option("--lr", lr_list, "Comma-separated learning rates")->required();

  std::vector<std::string> log_paths;
  std::string fields, scale = "linear", out_path;
  auto* plot = app.add_subcommand("plot", "Plot fields from run logs (.jsonl or .csv) as SVG");
  plot->add_option("logs", log_paths, "Run logs")->required();
  plot->add_option("--fields", fields, "Comma-separated record fields")->required();
  plot->add_option("--scale", scale, "linear or symlog")->check(CLI::IsMember({"linear", "symlog"}));
  plot->add_option("--out", out_path, "Output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report("usage", e.what());
    return 2;
  }

  try {
    if (*run) {
      const RunLog log = run_experiment(load(config_path));
      summarize(log);
      return fail_if_aborted(log);
    }
    if (*ratio) {
      const auto res = run_ratio_protocol(load(config_path));
      summarize(res.phase1);
      summarize(res.phase2);
      if (!res.phase2.records.empty()) {
        for (auto it = res.phase2.records.rbegin(); it != res.phase2.records.rend(); ++it) {
          if ((*it)[Field::convexity_ratio]) {
            std::cout << "final convexity_ratio " << *(*it)[Field::convexity_ratio] << " (denominator sign "
                      << *(*it)[Field::ratio_den_sign] << ")\n";
            break;
          }
        }
      }
      return fail_if_aborted(res.phase2);
    }
    if (*rsab) {
      const auto res = run_rs_ab(load(config_path));
      summarize(res.without_rs);
      summarize(res.with_rs);
      if (int rc = fail_if_aborted(res.without_rs)) return rc;
      return fail_if_aborted(res.with_rs);
    }
    if (*sweep) {
      const auto logs = run_sweep(load(config_path), parse_lr_list(lr_list));
      for (const auto& l : logs) summarize(l);
      for (const auto& l : logs) {
        if (int rc = fail_if_aborted(l)) return rc;
      }
      return 0;
    }
    if (*plot) {
      std::vector<RunLog> logs;
      for (const auto& p : log_paths) logs.push_back(load_run_log(p));
      std::vector<std::string> field_list;
      std::istringstream in(fields);
      for (std::string f; std::getline(in, f, ',');) field_list.push_back(f);
      plot_svg(logs, field_list, scale == "symlog" ? PlotScale::symlog : PlotScale::linear, out_path);
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }
  } catch (const optdiag::Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report("internal", e.what());
  }
  return 0;
}
