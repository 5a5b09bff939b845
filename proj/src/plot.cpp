#include "simt/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace simt {

namespace {

constexpr double kWidth = 640, kHeight = 440;
constexpr double kLeft = 70, kRight = 600, kTop = 50, kBottom = 380;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

struct Range {
  double lo = 0, hi = 1;
  double scale(double v, double pix_lo, double pix_hi) const {
    return pix_lo + (v - lo) / (hi - lo) * (pix_hi - pix_lo);
  }
};

Range axis_range(double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  if (hi - lo < 1e-12) {  // degenerate: pad to a unit window
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = (hi - lo) * 0.06;
  return {lo - pad, hi + pad};
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<PlotSeries>& series,
                          const std::string& comment) {
  bool any_point = false;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  for (const PlotSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!any_point) {
        xmin = xmax = x;
        ymin = ymax = y;
        any_point = true;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!any_point) throw std::invalid_argument("svg_line_plot: no data points");
  const Range xr = axis_range(xmin, xmax);
  const Range yr = axis_range(ymin, ymax);

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  if (!comment.empty()) out << "<!-- " << escape_xml(comment) << " -->\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << (kLeft + kRight) / 2 << "\" y=\"28\" font-size=\"16\" "
      << "text-anchor=\"middle\" font-family=\"sans-serif\">" << escape_xml(title)
      << "</text>\n";

  // axes
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight << "\" y2=\""
      << kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kBottom << "\" stroke=\"black\"/>\n";

  // ticks and grid
  constexpr int kTicks = 5;
  for (int t = 0; t <= kTicks; ++t) {
    const double fx = xr.lo + (xr.hi - xr.lo) * t / kTicks;
    const double px = xr.scale(fx, kLeft, kRight);
    out << "<line x1=\"" << fmt(px) << "\" y1=\"" << kBottom << "\" x2=\"" << fmt(px)
        << "\" y2=\"" << kBottom + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fmt(px) << "\" y=\"" << kBottom + 20
        << "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">"
        << fmt(fx, "%.3g") << "</text>\n";
    const double fy = yr.lo + (yr.hi - yr.lo) * t / kTicks;
    const double py = yr.scale(fy, kBottom, kTop);
    out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << fmt(py) << "\" x2=\"" << kLeft
        << "\" y2=\"" << fmt(py) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(py + 4)
        << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">"
        << fmt(fy, "%.3g") << "</text>\n";
  }
  out << "<text x=\"" << (kLeft + kRight) / 2 << "\" y=\"" << kBottom + 42
      << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">"
      << escape_xml(x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << (kTop + kBottom) / 2
      << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "transform=\"rotate(-90 18 " << (kTop + kBottom) / 2 << ")\">" << escape_xml(y_label)
      << "</text>\n";

  // series
  constexpr size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);
  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    if (series[s].points.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (size_t p = 0; p < series[s].points.size(); ++p) {
        if (p) out << ' ';
        out << fmt(xr.scale(series[s].points[p].first, kLeft, kRight)) << ','
            << fmt(yr.scale(series[s].points[p].second, kBottom, kTop));
      }
      out << "\"/>\n";
    }
    for (const auto& [x, y] : series[s].points) {
      out << "<circle cx=\"" << fmt(xr.scale(x, kLeft, kRight)) << "\" cy=\""
          << fmt(yr.scale(y, kBottom, kTop)) << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
    }
    // legend entry
    const double ly = kTop + 8 + 18 * static_cast<double>(s);
    out << "<rect x=\"" << kRight - 150 << "\" y=\"" << fmt(ly - 9)
        << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kRight - 132 << "\" y=\"" << fmt(ly + 2)
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << escape_xml(series[s].label)
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace simt
