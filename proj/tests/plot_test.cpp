#include <gtest/gtest.h>

#include <regex>

#include "optdiag/errors.hpp"
#include "optdiag/plot.hpp"

using namespace optdiag;

namespace {

RunLog series(const std::string& name, Field f, const std::vector<double>& values) {
  RunLog log;
  log.meta.name = name;
  for (std::size_t i = 0; i < values.size(); ++i) {
    MetricRecord r;
    r.step = i;
    r[f] = values[i];
    log.records.push_back(r);
  }
  return log;
}

std::vector<std::vector<std::pair<double, double>>> polylines(const std::string& svg) {
  std::vector<std::vector<std::pair<double, double>>> out;
  const std::regex line_re("<polyline class=\"series\"[^>]*points=\"([^\"]*)\"");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), line_re); it != std::sregex_iterator(); ++it) {
    std::vector<std::pair<double, double>> pts;
    std::istringstream in((*it)[1].str());
    for (std::string tok; in >> tok;) {
      const auto comma = tok.find(',');
      pts.emplace_back(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
    }
    out.push_back(pts);
  }
  return out;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(Plot, ConstantSeriesIsHorizontal) {
  const auto svg = render_svg({series("c", Field::loss, std::vector<double>(10, 5.0))}, {"loss"}, PlotScale::linear);
  const auto lines = polylines(svg);
  ASSERT_EQ(lines.size(), 1u);
  ASSERT_EQ(lines[0].size(), 10u);
  for (const auto& [x, y] : lines[0]) EXPECT_EQ(y, lines[0][0].second);
  EXPECT_LT(lines[0].front().first, lines[0].back().first);
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("version=\"1.1\""), std::string::npos);
}

TEST(Plot, SymlogIsOddAboutZeroLine) {
  const auto svg = render_svg({series("s", Field::cum_loss_diff, {-100, 0, 100})}, {"cum_loss_diff"}, PlotScale::symlog);
  const auto lines = polylines(svg);
  ASSERT_EQ(lines.size(), 1u);
  ASSERT_EQ(lines[0].size(), 3u);
  const std::regex zero_re("<line class=\"zero\"[^>]*y1=\"([0-9.]+)\"");
  std::smatch m;
  ASSERT_TRUE(std::regex_search(svg, m, zero_re));
  const double zero_y = std::stod(m[1]);
  EXPECT_NEAR(lines[0][1].second, zero_y, 1e-3);
  EXPECT_NEAR(lines[0][0].second - zero_y, zero_y - lines[0][2].second, 2e-3);
  EXPECT_NE(svg.find("linear threshold s=1"), std::string::npos);
}

TEST(Plot, SymlogFunction) {
  EXPECT_EQ(symlog(0.0), 0.0);
  EXPECT_DOUBLE_EQ(symlog(9.0), 1.0);
  EXPECT_DOUBLE_EQ(symlog(-99.0), -2.0);
}

TEST(Plot, TwoLogsTwoLegendEntries) {
  const auto a = series("rs_off", Field::cum_update_corr_rs, {0, -1, -2});
  const auto b = series("rs_on", Field::cum_update_corr_rs, {0, -0.5, -3});
  const auto svg = render_svg({a, b}, {"cum_update_corr_rs"}, PlotScale::symlog);
  EXPECT_EQ(polylines(svg).size(), 2u);
  EXPECT_EQ(count(svg, "<text class=\"legend\""), 2u);
  EXPECT_NE(svg.find("rs_off: cum_update_corr_rs"), std::string::npos);
  EXPECT_NE(svg.find("rs_on: cum_update_corr_rs"), std::string::npos);
}

TEST(Plot, AbsentValuesSkipped) {
  RunLog log = series("g", Field::inst_smooth, {1, 2, 3});
  log.records[1][Field::inst_smooth].reset();
  EXPECT_EQ(polylines(render_svg({log}, {"inst_smooth"}, PlotScale::linear))[0].size(), 2u);
}

TEST(Plot, UnknownFieldNamed) {
  try {
    render_svg({series("x", Field::loss, {1})}, {"losss"}, PlotScale::linear);
    FAIL() << "expected PlotError";
  } catch (const PlotError& e) {
    EXPECT_NE(std::string(e.what()).find("losss"), std::string::npos);
  }
}
