#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "optdiag/metrics.hpp"

namespace optdiag {

inline constexpr const char* kArtifactVersion = "optdiag 0.1.0";

struct RunMetadata {
  std::string name;
  std::string config_digest;
  std::string version = kArtifactVersion;
  std::string dataset;
  std::string model;
  std::string optimizer;
  std::string scaling;
  std::string reference;
  std::size_t dim = 0;
  std::size_t total_steps = 0;
  std::size_t cadence = 1;
  std::string full_eval;
  std::string sharpness;
  bool epoch_reset = true;
  std::string x_star;  // empty when no reference point

  bool operator==(const RunMetadata&) const = default;
};

// Where and why a run stopped early.
struct RunAbort {
  std::uint64_t step = 0;
  std::string kind;
  std::string message;

  bool operator==(const RunAbort&) const = default;
};

struct RunLog {
  RunMetadata meta;
  std::vector<MetricRecord> records;
  std::optional<RunAbort> abort;
  ParamVector final_x;
  double wall_seconds = 0.0;  // informational; never serialized with the records
};

enum class ExportFormat { csv, jsonl };

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string real17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string csv_header() {
  std::string h = "step,epoch,batch_digest";
  for (auto name : kFieldNames) {
    h += ',';
    h += name;
  }
  return h;
}

// One CSV row: 17 significant digits, absent values as empty cells.
inline std::string csv_row(const MetricRecord& r) {
  std::string s = std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + detail::hex64(r.batch_digest);
  for (const auto& v : r.values) {
    s += ',';
    if (v) s += detail::real17(*v);
  }
  return s;
}

inline nlohmann::ordered_json metadata_json(const RunMetadata& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["config_digest"] = m.config_digest;
  j["version"] = m.version;
  j["dataset"] = m.dataset;
  j["model"] = m.model;
  j["optimizer"] = m.optimizer;
  j["scaling"] = m.scaling;
  j["reference"] = m.reference;
  j["dim"] = m.dim;
  j["total_steps"] = m.total_steps;
  j["cadence"] = m.cadence;
  j["full_eval"] = m.full_eval;
  j["sharpness"] = m.sharpness;
  j["epoch_reset"] = m.epoch_reset;
  j["x_star"] = m.x_star;
  return nlohmann::ordered_json{{"metadata", j}};
}

inline std::string jsonl_metadata(const RunMetadata& m) { return metadata_json(m).dump(); }

inline std::string jsonl_record(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["batch_digest"] = detail::hex64(r.batch_digest);
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    if (r.values[i]) {
      j[std::string(kFieldNames[i])] = *r.values[i];
    } else {
      j[std::string(kFieldNames[i])] = nullptr;
    }
  }
  return j.dump();
}

inline std::string jsonl_abort(const RunAbort& a) {
  nlohmann::ordered_json j;
  j["step"] = a.step;
  j["kind"] = a.kind;
  j["message"] = a.message;
  return nlohmann::ordered_json{{"abort", j}}.dump();
}

inline std::string render_records(const RunLog& log, ExportFormat format) {
  std::string out;
  if (format == ExportFormat::csv) {
    out = csv_header() + "\n";
    for (const auto& r : log.records) out += csv_row(r) + "\n";
    return out;
  }
  out = jsonl_metadata(log.meta) + "\n";
  for (const auto& r : log.records) out += jsonl_record(r) + "\n";
  if (log.abort) out += jsonl_abort(*log.abort) + "\n";
  return out;
}

inline void export_records(const RunLog& log, ExportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("export: cannot open " + path);
  out << render_records(log, format);
  out.flush();
  if (!out) throw IoError("export: write failed for " + path);
}

// Streams records to CSV and/or JSONL as they are produced, flushing after
// each, so an interrupted run still leaves well-formed files.
class RecordWriter {
 public:
  RecordWriter() = default;
  RecordWriter(const std::string& csv_path, const std::string& jsonl_path, const RunMetadata& meta) {
    if (!csv_path.empty()) {
      csv_.open(csv_path, std::ios::binary | std::ios::trunc);
      if (!csv_) throw IoError("export: cannot open " + csv_path);
      csv_ << csv_header() << '\n' << std::flush;
    }
    if (!jsonl_path.empty()) {
      jsonl_.open(jsonl_path, std::ios::binary | std::ios::trunc);
      if (!jsonl_) throw IoError("export: cannot open " + jsonl_path);
      jsonl_ << jsonl_metadata(meta) << '\n' << std::flush;
    }
  }

  void write(const MetricRecord& r) {
    if (csv_.is_open()) csv_ << csv_row(r) << '\n' << std::flush;
    if (jsonl_.is_open()) jsonl_ << jsonl_record(r) << '\n' << std::flush;
    check();
  }

  void write_abort(const RunAbort& a) {
    if (jsonl_.is_open()) jsonl_ << jsonl_abort(a) << '\n' << std::flush;
    check();
  }

 private:
  void check() {
    if ((csv_.is_open() && !csv_) || (jsonl_.is_open() && !jsonl_)) throw IoError("export: write failed");
  }

  std::ofstream csv_;
  std::ofstream jsonl_;
};

// ---------------------------------------------------------------------------
// Readers

inline std::vector<MetricRecord> parse_csv_records(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) throw ParseError("csv: unexpected header");
  std::vector<MetricRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 3 + kFieldCount) {
      throw ParseError("csv: line " + std::to_string(line_no) + ": expected " + std::to_string(3 + kFieldCount) +
                       " cells");
    }
    const auto bad = [&](const std::string& c) {
      return ParseError("csv: line " + std::to_string(line_no) + ": bad cell '" + c + "'");
    };
    MetricRecord r;
    const auto parse_u = [&](const std::string& c, std::uint64_t& v, int base) {
      auto res = std::from_chars(c.data(), c.data() + c.size(), v, base);
      if (res.ec != std::errc{} || res.ptr != c.data() + c.size()) throw bad(c);
    };
    parse_u(cells[0], r.step, 10);
    parse_u(cells[1], r.epoch, 10);
    parse_u(cells[2], r.batch_digest, 16);
    for (std::size_t i = 0; i < kFieldCount; ++i) {
      const std::string& c = cells[3 + i];
      if (c.empty()) continue;
      double v = 0.0;
      auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc{} || res.ptr != c.data() + c.size()) throw bad(c);
      r.values[i] = v;
    }
    out.push_back(r);
  }
  return out;
}

inline RunLog parse_jsonl_log(const std::string& text) {
  RunLog log;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("jsonl: line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("metadata")) {
      const auto& m = j["metadata"];
      RunMetadata& md = log.meta;
      md.name = m.value("name", "");
      md.config_digest = m.value("config_digest", "");
      md.version = m.value("version", "");
      md.dataset = m.value("dataset", "");
      md.model = m.value("model", "");
      md.optimizer = m.value("optimizer", "");
      md.scaling = m.value("scaling", "");
      md.reference = m.value("reference", "");
      md.dim = m.value("dim", std::size_t{0});
      md.total_steps = m.value("total_steps", std::size_t{0});
      md.cadence = m.value("cadence", std::size_t{1});
      md.full_eval = m.value("full_eval", "");
      md.sharpness = m.value("sharpness", "");
      md.epoch_reset = m.value("epoch_reset", true);
      md.x_star = m.value("x_star", "");
      continue;
    }
    if (j.contains("abort")) {
      const auto& a = j["abort"];
      log.abort = RunAbort{a.value("step", std::uint64_t{0}), a.value("kind", ""), a.value("message", "")};
      continue;
    }
    MetricRecord r;
    try {
      r.step = j.at("step").get<std::uint64_t>();
      r.epoch = j.at("epoch").get<std::uint64_t>();
      const std::string digest = j.at("batch_digest").get<std::string>();
      std::from_chars(digest.data(), digest.data() + digest.size(), r.batch_digest, 16);
      for (std::size_t i = 0; i < kFieldCount; ++i) {
        const auto& v = j.at(std::string(kFieldNames[i]));
        if (!v.is_null()) r.values[i] = v.get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("jsonl: line " + std::to_string(line_no) + ": " + e.what());
    }
    log.records.push_back(r);
  }
  return log;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Loads a run log from .jsonl (metadata kept) or .csv (records only; the file
// stem becomes the run name).
inline RunLog load_run_log(const std::string& path) {
  const std::string text = read_text_file(path);
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") return parse_jsonl_log(text);
  RunLog log;
  log.records = parse_csv_records(text);
  auto slash = path.find_last_of('/');
  std::string stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
  if (auto dot = stem.rfind('.'); dot != std::string::npos) stem.resize(dot);
  log.meta.name = stem;
  return log;
}

}  // namespace optdiag
