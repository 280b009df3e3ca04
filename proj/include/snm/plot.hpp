// Minimal static SVG line charts for loss curves and metric-vs-blocks plots.
#pragma once

#include <string>
#include <vector>

namespace snm {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

// Writes an SVG line chart; throws io_error on write failure,
// parameter_error when no finite points exist.
void write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<PlotSeries>& series);

}  // namespace snm
