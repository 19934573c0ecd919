#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hrac/report.hpp"

using namespace hrac;

namespace {

harness::Curve curve(const std::string& label, double offset, double sem) {
  harness::Curve c;
  c.label = label;
  for (int i = 1; i <= 6; ++i) {
    c.x.push_back(i * 10000.0);
    c.mean.push_back(offset + 0.5 * i);
    c.sem.push_back(sem);
    c.n.push_back(5);
  }
  return c;
}

std::size_t count(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (auto p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
  return n;
}

std::string legend(const std::string& svg) {
  const auto a = svg.find("<g class=\"legend\">");
  return svg.substr(a, svg.find("</g>", a) - a);
}

}  // namespace

TEST(Plot, ZeroSemDrawsLineOnly) {
  const auto svg = report::plot_svg({curve("flat", 0.0, 0.0)}, {});
  EXPECT_EQ(count(svg, "<polygon"), 0u);
  EXPECT_EQ(count(svg, "<polyline"), 1u);
}

TEST(Plot, BandWhenSemPositive) {
  const auto svg = report::plot_svg({curve("a", 0.0, 0.2)}, {});
  EXPECT_EQ(count(svg, "<polygon"), 1u);
}

TEST(Plot, TwoSummariesTwoLegendEntries) {
  const auto svg = report::plot_svg({curve("HRAC", 0.0, 0.1), curve("NoAdj", -1.0, 0.0)}, {});
  const auto l = legend(svg);
  EXPECT_EQ(count(l, "<text"), 2u);
  EXPECT_NE(l.find(">HRAC<"), std::string::npos);
  EXPECT_NE(l.find(">NoAdj<"), std::string::npos);
}

TEST(Plot, EscapesLabels) {
  const auto svg = report::plot_svg({curve("a<b & c", 0.0, 0.0)}, {.title = "\"t\""});
  EXPECT_NE(svg.find("a&lt;b &amp; c"), std::string::npos);
  EXPECT_NE(svg.find("&quot;t&quot;"), std::string::npos);
}

TEST(Plot, EmptyListThrows) { EXPECT_THROW(report::plot_svg({}, {}), std::invalid_argument); }

TEST(Plot, MatchesGolden) {
  const auto svg = report::plot_svg({curve("HRAC", 0.0, 0.25), curve("NoAdj", -1.0, 0.1)},
                                    {.title = "Key-Chest", .y_label = "mean episode reward"});
  const std::filesystem::path golden = std::filesystem::path(HRAC_GOLDEN_DIR) / "plot_two_curves.svg";
  if (std::getenv("HRAC_UPDATE_GOLDEN")) std::ofstream(golden) << svg;
  std::ifstream in(golden);
  ASSERT_TRUE(in) << "missing " << golden << " (set HRAC_UPDATE_GOLDEN=1 once to create it)";
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(svg, ss.str());
}

TEST(Heatmap, OneRectPerSetEntry) {
  std::vector<std::uint8_t> dense{1, 1, 0, 1, 1, 1, 0, 1, 1};
  const auto svg = report::heatmap_svg(dense, 3, "m");
  // Frame and background are separate rects.
  EXPECT_EQ(count(svg, "<rect"), 7u + 2u);
  EXPECT_THROW(report::heatmap_svg(dense, 2, "bad"), std::invalid_argument);
}

TEST(Heatmap, FromMatrix) {
  adjacency::AdjacencyMatrix m(1);
  m.update(adjacency::Trajectory{{{1, 1}, {2, 1}}, 0});
  EXPECT_EQ(report::heatmap_svg(m, "m"), report::heatmap_svg(std::vector<std::uint8_t>{1, 1, 1, 1}, 2, "m"));
}
