#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hrac/adjacency.hpp"
#include "hrac/harness.hpp"

namespace hrac::report {

struct PlotOptions {
  std::string title;
  std::string x_label = "environment steps";
  std::string y_label = "mean episode reward";
  int width = 720;
  int height = 440;
};

/// Line chart with a shaded mean +- SEM band per curve (no band where SEM is 0).
/// Output depends only on the inputs.
std::string plot_svg(const std::vector<harness::Curve>& curves, const PlotOptions& opts = {});

/// Binary heat map, one square per matrix entry.
std::string heatmap_svg(const std::vector<std::uint8_t>& dense, int n, const std::string& title);
std::string heatmap_svg(const adjacency::AdjacencyMatrix& m, const std::string& title);

}  // namespace hrac::report
