#include "plot.hpp"

#include <algorithm>
#include <cstdio>

namespace mgnm::plot {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* pattern, double a, double b) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

}  // namespace

std::string pr_curves_svg(const std::vector<Series>& series, const std::string& title) {
  constexpr double W = 480, H = 400, left = 56, top = 36, plot_w = 380, plot_h = 300;
  auto px = [&](double r) { return left + r * plot_w; };
  auto py = [&](double p) { return top + (1.0 - p) * plot_h; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(int(W)) + "\" height=\"" +
                    std::to_string(int(H)) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(int(W / 2)) + "\" y=\"20\" text-anchor=\"middle\">" + escape(title) + "</text>\n";
  svg += "<rect x=\"" + std::to_string(int(left)) + "\" y=\"" + std::to_string(int(top)) + "\" width=\"" +
         std::to_string(int(plot_w)) + "\" height=\"" + std::to_string(int(plot_h)) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    svg += "<text x=\"" + fmt("%.1f", px(v), 0) + "\" y=\"" + fmt("%.1f", top + plot_h + 16, 0) +
           "\" text-anchor=\"middle\">" + fmt("%.2f", v, 0) + "</text>\n";
    svg += "<text x=\"" + fmt("%.1f", left - 6, 0) + "\" y=\"" + fmt("%.1f", py(v) + 4, 0) +
           "\" text-anchor=\"end\">" + fmt("%.2f", v, 0) + "</text>\n";
  }
  svg += "<text x=\"" + fmt("%.1f", left + plot_w / 2, 0) + "\" y=\"" + fmt("%.1f", H - 18, 0) +
         "\" text-anchor=\"middle\">recall</text>\n";
  svg += "<text x=\"14\" y=\"" + fmt("%.1f", top + plot_h / 2, 0) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " + fmt("%.1f", top + plot_h / 2, 0) +
         ")\">precision</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& c = series[s].curve;
    const char* color = kPalette[s % std::size(kPalette)];
    std::string points = fmt("%.2f,%.2f", px(0), py(c.precision.empty() ? 0 : c.precision.front()));
    double prev_r = 0.0;
    for (std::size_t i = 0; i < c.recall.size(); ++i) {
      points += " " + fmt("%.2f,%.2f", px(prev_r), py(c.precision[i]));
      points += " " + fmt("%.2f,%.2f", px(c.recall[i]), py(c.precision[i]));
      prev_r = c.recall[i];
    }
    svg += std::string("<polyline fill=\"none\" stroke=\"") + color + "\" stroke-width=\"1.5\" points=\"" + points +
           "\"/>\n";
    svg += std::string("<text x=\"") + fmt("%.1f", left + plot_w - 4, 0) + "\" y=\"" +
           fmt("%.1f", top + 16 + 14.0 * s, 0) + "\" text-anchor=\"end\" fill=\"" + color + "\">" +
           escape(series[s].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string heatmap_svg(const Matrix& values, const std::string& title, int cell) {
  const double lo = values.size() ? values.minCoeff() : 0.0;
  const double hi = values.size() ? values.maxCoeff() : 1.0;
  const double span = hi > lo ? hi - lo : 1.0;
  const int W = static_cast<int>(values.cols()) * cell + 20;
  const int H = static_cast<int>(values.rows()) * cell + 50;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) + "\" height=\"" +
                    std::to_string(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"10\" y=\"18\">" + escape(title) + "</text>\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double t = (values(r, c) - lo) / span;
      const int red = static_cast<int>(255 * (1.0 - t) + 8 * t);
      const int green = static_cast<int>(255 * (1.0 - t) + 48 * t);
      const int blue = static_cast<int>(255 * (1.0 - t) + 107 * t);
      char buf[160];
      std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\"/>\n",
                    10 + static_cast<int>(c) * cell, 30 + static_cast<int>(r) * cell, cell, cell, red, green, blue);
      svg += buf;
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace mgnm::plot
