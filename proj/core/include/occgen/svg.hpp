#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "occgen/common.hpp"

namespace occgen {

struct PlotSeries {
  std::string label;
  std::vector<real> y;
};

// Minimal SVG line chart over a shared x axis, one polyline per
// series, autoscaled with light grid lines and a legend.
void write_line_plot(const std::filesystem::path& path,
                     const std::string& title, const std::string& x_label,
                     const std::vector<real>& x,
                     const std::vector<PlotSeries>& series);

}  // namespace occgen
