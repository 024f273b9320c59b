#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "divnet/errors.hpp"

namespace divnet {

struct PlotPoint {
  double x = 0.0;
  double y = 0.0;
  double err = 0.0;  // symmetric error bar half-height; 0 draws none
};

struct PlotSeries {
  std::string name;
  std::vector<PlotPoint> points;
};

struct PlotAxes {
  std::string title;
  std::string x_label;
  std::string y_label;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string svg_label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

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

}  // namespace detail

/// Self-contained SVG line chart: one polyline per series, point markers,
/// symmetric error bars, legend in input order. Output bytes depend only on
/// the inputs, so fixed records yield byte-identical files.
inline void emit_plot(const std::vector<PlotSeries>& series, const PlotAxes& axes,
                      const std::string& path) {
  if (series.empty()) throw precondition_error("emit_plot: no series");
  std::size_t total_points = 0;
  for (const auto& s : series) total_points += s.points.size();
  if (total_points == 0) throw precondition_error("emit_plot: no points");

  constexpr int width = 760, height = 460;
  constexpr int left = 72, right = 170, top = 44, bottom = 56;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y - p.err);
      ymax = std::max(ymax, p.y + p.err);
    }
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double xpad = 0.04 * (xmax - xmin), ypad = 0.06 * (ymax - ymin);
  xmin -= xpad;
  xmax += xpad;
  ymin -= ypad;
  ymax += ypad;

  const auto map_x = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
  const auto map_y = [&](double y) { return top + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

  std::ofstream os(path);
  if (!os) throw format_error(path + ": cannot open for writing");
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n"
     << "<style>text{font-family:Helvetica,Arial,sans-serif;font-size:12px;fill:#222}"
        ".t{font-size:15px;font-weight:bold}.g{stroke:#ddd;stroke-width:1}"
        ".a{stroke:#333;stroke-width:1}</style>\n";

  if (!axes.title.empty())
    os << "<text class=\"t\" x=\"" << detail::svg_num(left + plot_w / 2) << "\" y=\"24\" "
       << "text-anchor=\"middle\">" << detail::xml_escape(axes.title) << "</text>\n";

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double tx = xmin + (xmax - xmin) * i / kTicks;
    const double px = map_x(tx);
    os << "<line class=\"g\" x1=\"" << detail::svg_num(px) << "\" y1=\"" << top << "\" x2=\""
       << detail::svg_num(px) << "\" y2=\"" << detail::svg_num(top + plot_h) << "\"/>\n"
       << "<text x=\"" << detail::svg_num(px) << "\" y=\"" << detail::svg_num(top + plot_h + 18)
       << "\" text-anchor=\"middle\">" << detail::svg_label(tx) << "</text>\n";
    const double ty = ymin + (ymax - ymin) * i / kTicks;
    const double py = map_y(ty);
    os << "<line class=\"g\" x1=\"" << left << "\" y1=\"" << detail::svg_num(py) << "\" x2=\""
       << detail::svg_num(left + plot_w) << "\" y2=\"" << detail::svg_num(py) << "\"/>\n"
       << "<text x=\"" << left - 8 << "\" y=\"" << detail::svg_num(py + 4)
       << "\" text-anchor=\"end\">" << detail::svg_label(ty) << "</text>\n";
  }
  os << "<line class=\"a\" x1=\"" << left << "\" y1=\"" << detail::svg_num(top + plot_h)
     << "\" x2=\"" << detail::svg_num(left + plot_w) << "\" y2=\"" << detail::svg_num(top + plot_h)
     << "\"/>\n"
     << "<line class=\"a\" x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << detail::svg_num(top + plot_h) << "\"/>\n";
  if (!axes.x_label.empty())
    os << "<text x=\"" << detail::svg_num(left + plot_w / 2) << "\" y=\"" << height - 14
       << "\" text-anchor=\"middle\">" << detail::xml_escape(axes.x_label) << "</text>\n";
  if (!axes.y_label.empty())
    os << "<text x=\"18\" y=\"" << detail::svg_num(top + plot_h / 2)
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << detail::svg_num(top + plot_h / 2) << ")\">" << detail::xml_escape(axes.y_label)
       << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % kPaletteSize];
    const auto& pts = series[si].points;
    if (pts.size() > 1) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
      for (std::size_t i = 0; i < pts.size(); ++i)
        os << detail::svg_num(map_x(pts[i].x)) << "," << detail::svg_num(map_y(pts[i].y))
           << (i + 1 < pts.size() ? " " : "");
      os << "\"/>\n";
    }
    for (const auto& p : pts) {
      const double px = map_x(p.x), py = map_y(p.y);
      if (p.err > 0.0) {
        const double y_lo = map_y(p.y - p.err), y_hi = map_y(p.y + p.err);
        os << "<line stroke=\"" << color << "\" stroke-width=\"1.2\" x1=\"" << detail::svg_num(px)
           << "\" y1=\"" << detail::svg_num(y_lo) << "\" x2=\"" << detail::svg_num(px)
           << "\" y2=\"" << detail::svg_num(y_hi) << "\"/>\n";
        for (double ye : {y_lo, y_hi})
          os << "<line stroke=\"" << color << "\" stroke-width=\"1.2\" x1=\""
             << detail::svg_num(px - 4) << "\" y1=\"" << detail::svg_num(ye) << "\" x2=\""
             << detail::svg_num(px + 4) << "\" y2=\"" << detail::svg_num(ye) << "\"/>\n";
      }
      os << "<circle cx=\"" << detail::svg_num(px) << "\" cy=\"" << detail::svg_num(py)
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
  }

  const double legend_x = left + plot_w + 14;
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double ly = top + 10 + 20.0 * static_cast<double>(si);
    os << "<line stroke=\"" << kPalette[si % kPaletteSize] << "\" stroke-width=\"2.5\" x1=\""
       << detail::svg_num(legend_x) << "\" y1=\"" << detail::svg_num(ly) << "\" x2=\""
       << detail::svg_num(legend_x + 22) << "\" y2=\"" << detail::svg_num(ly) << "\"/>\n"
       << "<text x=\"" << detail::svg_num(legend_x + 28) << "\" y=\"" << detail::svg_num(ly + 4)
       << "\">" << detail::xml_escape(series[si].name) << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw format_error(path + ": write failed");
}

}  // namespace divnet
