#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "optdiag/runlog.hpp"

namespace optdiag {

enum class PlotScale { linear, symlog };

// sign(v) * log10(1 + |v| / threshold)
inline double symlog(double v, double threshold = 1.0) {
  return std::copysign(std::log10(1.0 + std::abs(v) / threshold), v);
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

/// Standalone SVG 1.1 line chart with one polyline per (log, field) pair and a
/// legend entry for each. Absent values are skipped. Throws PlotError on an
/// unknown field name.
inline std::string render_svg(const std::vector<RunLog>& logs, const std::vector<std::string>& fields,
                              PlotScale scale) {
  if (logs.empty()) throw PlotError("plot: no logs given");
  if (fields.empty()) throw PlotError("plot: no fields given");
  std::vector<Field> ids;
  for (const auto& f : fields) {
    auto id = field_from_name(f);
    if (!id) throw PlotError("plot: unknown field '" + f + "'");
    ids.push_back(*id);
  }

  constexpr double kWidth = 800, kHeight = 480;
  constexpr double kLeft = 80, kRight = 220, kTop = 30, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const auto transform = [scale](double v) { return scale == PlotScale::symlog ? symlog(v) : v; };

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& log : logs) {
    for (const auto& r : log.records) {
      for (Field f : ids) {
        if (!r[f] || !std::isfinite(*r[f])) continue;
        const double s = static_cast<double>(r.step);
        const double y = transform(*r[f]);
        xmin = std::min(xmin, s);
        xmax = std::max(xmax, s);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    ymin -= 1;
    ymax += 1;
  }
  const auto px = [&](double s) { return kLeft + (s - xmin) / (xmax - xmin) * plot_w; };
  const auto py = [&](double y) { return kTop + (ymax - y) / (ymax - ymin) * plot_h; };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\"480\" viewBox=\"0 0 800 480\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"480\" fill=\"white\"/>\n";
  svg += "<rect class=\"frame\" x=\"" + detail::fmt("%.3f", kLeft) + "\" y=\"" + detail::fmt("%.3f", kTop) +
         "\" width=\"" + detail::fmt("%.3f", plot_w) + "\" height=\"" + detail::fmt("%.3f", plot_h) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  if (ymin < 0 && ymax > 0) {
    svg += "<line class=\"zero\" x1=\"" + detail::fmt("%.3f", kLeft) + "\" y1=\"" + detail::fmt("%.3f", py(0)) +
           "\" x2=\"" + detail::fmt("%.3f", kLeft + plot_w) + "\" y2=\"" + detail::fmt("%.3f", py(0)) +
           "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  // Axis tick labels at the extremes.
  svg += "<text x=\"" + detail::fmt("%.3f", kLeft - 6) + "\" y=\"" + detail::fmt("%.3f", kTop + 4) +
         "\" font-size=\"11\" text-anchor=\"end\">" + detail::fmt("%.4g", ymax) + "</text>\n";
  svg += "<text x=\"" + detail::fmt("%.3f", kLeft - 6) + "\" y=\"" + detail::fmt("%.3f", kTop + plot_h) +
         "\" font-size=\"11\" text-anchor=\"end\">" + detail::fmt("%.4g", ymin) + "</text>\n";
  svg += "<text x=\"" + detail::fmt("%.3f", kLeft) + "\" y=\"" + detail::fmt("%.3f", kTop + plot_h + 16) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + detail::fmt("%.0f", xmin) + "</text>\n";
  svg += "<text x=\"" + detail::fmt("%.3f", kLeft + plot_w) + "\" y=\"" + detail::fmt("%.3f", kTop + plot_h + 16) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + detail::fmt("%.0f", xmax) + "</text>\n";
  svg += "<text x=\"" + detail::fmt("%.3f", kLeft + plot_w / 2) + "\" y=\"" + detail::fmt("%.3f", kHeight - 10) +
         "\" font-size=\"12\" text-anchor=\"middle\">step</text>\n";
  const std::string ylabel = scale == PlotScale::symlog ? "symlog(value), linear threshold s=1" : "value";
  svg += "<text class=\"ylabel\" x=\"16\" y=\"" + detail::fmt("%.3f", kTop + plot_h / 2) +
         "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         detail::fmt("%.3f", kTop + plot_h / 2) + ")\">" + ylabel + "</text>\n";

  std::size_t series = 0;
  for (std::size_t li = 0; li < logs.size(); ++li) {
    const std::string label = logs[li].meta.name.empty() ? "run" + std::to_string(li) : logs[li].meta.name;
    for (std::size_t fi = 0; fi < ids.size(); ++fi, ++series) {
      const char* color = kColors[series % std::size(kColors)];
      std::string points;
      for (const auto& r : logs[li].records) {
        const auto& v = r[ids[fi]];
        if (!v || !std::isfinite(*v)) continue;
        if (!points.empty()) points += ' ';
        points += detail::fmt("%.3f", px(static_cast<double>(r.step))) + "," + detail::fmt("%.3f", py(transform(*v)));
      }
      svg += "<polyline class=\"series\" fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
      const double ly = kTop + 12 + 18 * static_cast<double>(series);
      svg += "<line class=\"legend\" x1=\"" + detail::fmt("%.3f", kWidth - kRight + 12) + "\" y1=\"" +
             detail::fmt("%.3f", ly - 4) + "\" x2=\"" + detail::fmt("%.3f", kWidth - kRight + 36) + "\" y2=\"" +
             detail::fmt("%.3f", ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      svg += "<text class=\"legend\" x=\"" + detail::fmt("%.3f", kWidth - kRight + 42) + "\" y=\"" +
             detail::fmt("%.3f", ly) + "\" font-size=\"11\">" + detail::xml_escape(label + ": " + fields[fi]) +
             "</text>\n";
    }
  }
  svg += "</svg>\n";
  return svg;
}

inline void plot_svg(const std::vector<RunLog>& logs, const std::vector<std::string>& fields, PlotScale scale,
                     const std::string& path) {
  const std::string svg = render_svg(logs, fields, scale);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("plot: cannot write " + path);
  out << svg;
}

}  // namespace optdiag
