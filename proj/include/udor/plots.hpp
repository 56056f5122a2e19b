#ifndef UDOR_PLOTS_HPP
#define UDOR_PLOTS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "udor/common.hpp"

namespace udor {
namespace plots {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// short tick labels
inline std::string fmt_tick(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

inline const char* color(size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % 8];
}

}  // namespace detail

// Standalone SVG line chart. Series share one axis pair; degenerate ranges
// get a unit span so single points still render.
inline void write_line_chart(const std::filesystem::path& path, const std::string& title,
                             const std::string& x_label, const std::string& y_label,
                             const std::vector<Series>& series, int width = 640,
                             int height = 420) {
  if (series.empty()) throw ConfigError("line chart needs at least one series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (auto& s : series) {
    if (s.x.size() != s.y.size()) throw ConfigError("series x/y lengths differ");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) throw ConfigError("line chart has no finite points");
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double ml = 64, mr = 16, mt = 40, mb = 48;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto sx = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double v) { return mt + ph - (v - ymin) / (ymax - ymin) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">" << title << "</text>\n";

  // axes with 5 ticks per side
  svg << "<g stroke=\"#333\" stroke-width=\"1\">"
      << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\"/>"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\"/></g>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double fy = ymin + (ymax - ymin) * i / 5.0;
    svg << "<line x1=\"" << sx(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << sx(fx) << "\" y2=\""
        << mt + ph + 4 << "\" stroke=\"#333\"/>"
        << "<text x=\"" << sx(fx) << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">"
        << detail::fmt_tick(fx) << "</text>\n";
    svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << sy(fy) << "\" x2=\"" << ml << "\" y2=\""
        << sy(fy) << "\" stroke=\"#333\"/>"
        << "<text x=\"" << ml - 7 << "\" y=\"" << sy(fy) + 4 << "\" text-anchor=\"end\">"
        << detail::fmt_tick(fy) << "</text>\n";
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  svg << "<text x=\"14\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" font-size=\"12\""
      << " transform=\"rotate(-90 14 " << mt + ph / 2 << ")\">" << y_label << "</text>\n";
  svg << "</g>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    std::ostringstream pts;
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      pts << detail::fmt(sx(s.x[i])) << ',' << detail::fmt(sy(s.y[i])) << ' ';
    }
    svg << "<polyline fill=\"none\" stroke=\"" << detail::color(si)
        << "\" stroke-width=\"1.8\" points=\"" << pts.str() << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      svg << "<circle cx=\"" << detail::fmt(sx(s.x[i])) << "\" cy=\"" << detail::fmt(sy(s.y[i]))
          << "\" r=\"2.6\" fill=\"" << detail::color(si) << "\"/>\n";
    }
    // legend entry
    const double lx = ml + pw - 150, ly = mt + 14 + 16 * double(si);
    svg << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 22 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << detail::color(si) << "\" stroke-width=\"2\"/>"
        << "<text x=\"" << lx + 28 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
  }
  svg << "</svg>\n";
  write_text_file(path, svg.str());
}

}  // namespace plots
}  // namespace udor

#endif  // UDOR_PLOTS_HPP
