#pragma once

// Minimal SVG line charts for offline reports.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "beatfuse/common.hpp"

namespace beatfuse {

struct SvgSeries {
  std::string label;
  std::vector<double> y;
};

inline void write_line_chart_svg(std::ostream& out, const std::string& title,
                                 const std::vector<double>& x,
                                 const std::vector<SvgSeries>& series, int width = 780,
                                 int height = 420) {
  if (x.empty() || series.empty()) throw data_error("svg: nothing to plot");
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
                                   "#bcbd22", "#e377c2"};
  const int margin_l = 56, margin_r = 160, margin_t = 40, margin_b = 40;
  const double plot_w = width - margin_l - margin_r;
  const double plot_h = height - margin_t - margin_b;

  double ymin = 0.0, ymax = 0.0;
  bool first = true;
  for (const auto& s : series)
    for (double v : s.y) {
      if (first) {
        ymin = ymax = v;
        first = false;
      }
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (ymax - ymin < 1e-12) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  const double xmin = x.front(), xmax = x.back();
  auto px = [&](double v) { return margin_l + (v - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double v) { return margin_t + (1.0 - (v - ymin) / (ymax - ymin)) * plot_h; };

  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << margin_l << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">"
      << title << "</text>\n";
  // axes
  out << "<line x1=\"" << margin_l << "\" y1=\"" << margin_t + plot_h << "\" x2=\""
      << margin_l + plot_w << "\" y2=\"" << margin_t + plot_h
      << "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << margin_l << "\" y1=\"" << margin_t << "\" x2=\"" << margin_l
      << "\" y2=\"" << margin_t + plot_h << "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x=\"" << margin_l - 6 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << std::setprecision(3) << yv << std::setprecision(2) << "</text>\n";
  }
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 10))
    out << "<text x=\"" << px(x[i]) << "\" y=\"" << margin_t + plot_h + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << x[i]
        << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < x.size() && i < series[s].y.size(); ++i)
      out << px(x[i]) << ',' << py(series[s].y[i]) << ' ';
    out << "\"/>\n";
    const double ly = margin_t + 16.0 * s;
    out << "<line x1=\"" << margin_l + plot_w + 10 << "\" y1=\"" << ly + 8 << "\" x2=\""
        << margin_l + plot_w + 34 << "\" y2=\"" << ly + 8 << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << margin_l + plot_w + 40 << "\" y=\"" << ly + 12
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].label
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace beatfuse
