#include "snm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "snm/common.hpp"

namespace snm {

namespace {

constexpr int kWidth = 640, kHeight = 420;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<PlotSeries>& series) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmin > xmax) throw parameter_error("plot has no finite points");
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }

  const double pw = kWidth - kMarginL - kMarginR;
  const double ph = kHeight - kMarginT - kMarginB;
  auto px = [&](double x) { return kMarginL + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kMarginT + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
      << "' font-family='sans-serif' font-size='12'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << kWidth / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";

  // axes + ticks
  svg << "<line x1='" << kMarginL << "' y1='" << kMarginT + ph << "' x2='" << kMarginL + pw
      << "' y2='" << kMarginT + ph << "' stroke='black'/>\n";
  svg << "<line x1='" << kMarginL << "' y1='" << kMarginT << "' x2='" << kMarginL << "' y2='"
      << kMarginT + ph << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    svg << "<line x1='" << px(xv) << "' y1='" << kMarginT + ph << "' x2='" << px(xv) << "' y2='"
        << kMarginT + ph + 4 << "' stroke='black'/>\n";
    svg << "<text x='" << px(xv) << "' y='" << kMarginT + ph + 18 << "' text-anchor='middle'>"
        << fmt(xv) << "</text>\n";
    svg << "<line x1='" << kMarginL - 4 << "' y1='" << py(yv) << "' x2='" << kMarginL << "' y2='"
        << py(yv) << "' stroke='black'/>\n";
    svg << "<text x='" << kMarginL - 8 << "' y='" << py(yv) + 4 << "' text-anchor='end'>"
        << fmt(yv) << "</text>\n";
  }
  svg << "<text x='" << kMarginL + pw / 2 << "' y='" << kHeight - 8
      << "' text-anchor='middle'>" << xlabel << "</text>\n";
  svg << "<text x='16' y='" << kMarginT + ph / 2
      << "' text-anchor='middle' transform='rotate(-90 16 " << kMarginT + ph / 2 << ")'>" << ylabel
      << "</text>\n";

  int color = 0;
  int legend_y = kMarginT + 6;
  for (const auto& s : series) {
    const char* c = kColors[color % 6];
    std::ostringstream pts;
    for (const auto& [x, y] : s.points)
      if (std::isfinite(x) && std::isfinite(y)) pts << px(x) << "," << py(y) << " ";
    svg << "<polyline points='" << pts.str() << "' fill='none' stroke='" << c
        << "' stroke-width='1.5'/>\n";
    svg << "<circle cx='" << kMarginL + pw - 100 << "' cy='" << legend_y << "' r='4' fill='" << c
        << "'/>\n";
    svg << "<text x='" << kMarginL + pw - 90 << "' y='" << legend_y + 4 << "'>" << s.name
        << "</text>\n";
    legend_y += 16;
    ++color;
  }
  svg << "</svg>\n";

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f << svg.str();
  if (!f) throw io_error("write failed for '" + path + "'");
}

}  // namespace snm
