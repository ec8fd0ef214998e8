#include "rpcate/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rpcate {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

/// Three-stop color ramp (dark blue, teal, yellow) over t in [0, 1].
std::string ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto lerp = [](double a, double b, double u) { return a + (b - a) * u; };
    double r, g, b;
    if (t < 0.5) {
        double u = t / 0.5;
        r = lerp(33, 38, u);
        g = lerp(20, 148, u);
        b = lerp(92, 140, u);
    } else {
        double u = (t - 0.5) / 0.5;
        r = lerp(38, 245, u);
        g = lerp(148, 224, u);
        b = lerp(140, 56, u);
    }
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround(r)),
                  static_cast<int>(std::lround(g)), static_cast<int>(std::lround(b)));
    return buf;
}

}  // namespace

std::string attention_heatmap_svg(const Tensor& map, const std::vector<std::string>& feature_names,
                                  const std::vector<double>& averages, const std::string& title) {
    const int m = map.dim(0);
    const int n = map.dim(1);

    double lo = map[0], hi = map[0];
    for (std::size_t i = 0; i < map.size(); ++i) {
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    double span = hi - lo;
    if (span <= 0.0) span = 1.0;

    const double cell_w = std::max(2.0, std::min(18.0, 720.0 / m));
    const double cell_h = 36.0;
    const double left = 90.0, top = 50.0;
    const double grid_w = cell_w * m, grid_h = cell_h * n;
    const double bar_x = left + grid_w + 30.0;
    const double width = bar_x + 180.0;
    const double height = top + grid_h + 60.0;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
      << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << " " << fmt(height) << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << fmt(left) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";

    // Feature rows by sample columns.
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < m; ++i) {
            double t = (map.at(i, j) - lo) / span;
            s << "<rect x=\"" << fmt(left + i * cell_w) << "\" y=\"" << fmt(top + j * cell_h)
              << "\" width=\"" << fmt(cell_w) << "\" height=\"" << fmt(cell_h) << "\" fill=\""
              << ramp(t) << "\"/>\n";
        }
        s << "<text x=\"" << fmt(left - 8.0) << "\" y=\"" << fmt(top + j * cell_h + cell_h / 2 + 4)
          << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">"
          << feature_names[static_cast<std::size_t>(j)] << "</text>\n";
        s << "<text x=\"" << fmt(bar_x + 60.0) << "\" y=\""
          << fmt(top + j * cell_h + cell_h / 2 + 4)
          << "\" font-family=\"sans-serif\" font-size=\"12\">avg "
          << fmt(averages[static_cast<std::size_t>(j)]) << "</text>\n";
    }
    s << "<text x=\"" << fmt(left) << "\" y=\"" << fmt(top + grid_h + 24)
      << "\" font-family=\"sans-serif\" font-size=\"12\">samples 0.." << (m - 1) << "</text>\n";

    // Color bar.
    const int steps = 24;
    const double bar_h = grid_h;
    for (int k = 0; k < steps; ++k) {
        double t = 1.0 - (k + 0.5) / steps;
        s << "<rect x=\"" << fmt(bar_x) << "\" y=\"" << fmt(top + bar_h * k / steps)
          << "\" width=\"14\" height=\"" << fmt(bar_h / steps + 0.5) << "\" fill=\"" << ramp(t)
          << "\"/>\n";
    }
    s << "<text x=\"" << fmt(bar_x + 18.0) << "\" y=\"" << fmt(top + 10.0)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(hi) << "</text>\n";
    s << "<text x=\"" << fmt(bar_x + 18.0) << "\" y=\"" << fmt(top + bar_h)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(lo) << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

std::string line_chart_svg(std::span<const double> values, const std::string& title,
                           const std::string& y_label) {
    const double width = 760.0, height = 420.0;
    const double left = 70.0, top = 44.0, right = 24.0, bottom = 48.0;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double lo = 0.0, hi = 1.0;
    if (!values.empty()) {
        lo = hi = values[0];
        for (double v : values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi - lo <= 0.0) hi = lo + 1.0;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
      << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << " " << fmt(height) << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << fmt(left) << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";
    s << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(plot_w)
      << "\" height=\"" << fmt(plot_h) << "\" fill=\"none\" stroke=\"#888\"/>\n";

    if (values.size() >= 2) {
        s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
        const std::size_t count = values.size();
        for (std::size_t i = 0; i < count; ++i) {
            double x = left + plot_w * static_cast<double>(i) / static_cast<double>(count - 1);
            double y = top + plot_h * (1.0 - (values[i] - lo) / (hi - lo));
            s << fmt(x) << "," << fmt(y) << " ";
        }
        s << "\"/>\n";
    }

    s << "<text x=\"" << fmt(left - 6.0) << "\" y=\"" << fmt(top + 10.0)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt(hi)
      << "</text>\n";
    s << "<text x=\"" << fmt(left - 6.0) << "\" y=\"" << fmt(top + plot_h)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt(lo)
      << "</text>\n";
    s << "<text x=\"16\" y=\"" << fmt(top + plot_h / 2)
      << "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
      << fmt(top + plot_h / 2) << ")\">" << y_label << "</text>\n";
    s << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"" << fmt(height - 14.0)
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">epoch ("
      << values.size() << " total)</text>\n";
    s << "</svg>\n";
    return s.str();
}

}  // namespace rpcate
