#pragma once

#include <string>
#include <utility>
#include <vector>

namespace simt {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y), plotted in order
};

// Dependency-free standalone SVG line chart. Output is deterministic for
// identical inputs (fixed canvas, fixed decimal formatting, fixed palette).
// `comment` is embedded verbatim in an XML comment for provenance.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<PlotSeries>& series,
                          const std::string& comment = "");

}  // namespace simt
