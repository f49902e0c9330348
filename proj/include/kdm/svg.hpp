#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "kdm/checkerboard.hpp"
#include "kdm/errors.hpp"

namespace kdm {

// Fixed 8-color palette for cell indices; -1 renders black (outliers /
// outside).
inline const char* svg_palette(int idx) {
    static const char* colors[8] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231",
                                    "#911eb4", "#42d4f4", "#f032e6", "#9a6324"};
    if (idx < 0) return "#000000";
    return colors[idx % 8];
}

struct SvgScatterOptions {
    double extent = 5.0;  // plot range [-extent, extent]^2
    int size_px = 640;
    std::string title;
    const CheckerboardSpec* grid = nullptr;  // draw grid lines when set
    double point_radius = 1.2;
    size_t max_points = 20000;  // plotted points cap (every k-th point)
};

// Standalone scatter plot, one circle per point colored by its index.
inline void svg_scatter(const std::string& path, const std::vector<Point>& pts,
                        const std::vector<int>& colors, const SvgScatterOptions& opts) {
    if (pts.size() != colors.size()) throw ShapeError("svg_scatter: points/colors mismatch");
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    const int s = opts.size_px;
    const double scale = s / (2.0 * opts.extent);
    auto px = [&](double x) { return (x + opts.extent) * scale; };
    auto py = [&](double y) { return s - (y + opts.extent) * scale; };
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << s << "' height='" << s << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    if (opts.grid) {
        const double side = opts.grid->cell_side();
        for (int k = 0; k <= opts.grid->grid; ++k) {
            const double v = -opts.grid->extent + k * side;
            f << "<line x1='" << px(v) << "' y1='" << py(-opts.grid->extent) << "' x2='" << px(v)
              << "' y2='" << py(opts.grid->extent) << "' stroke='#cccccc'/>\n";
            f << "<line x1='" << px(-opts.grid->extent) << "' y1='" << py(v) << "' x2='"
              << px(opts.grid->extent) << "' y2='" << py(v) << "' stroke='#cccccc'/>\n";
        }
    }
    const size_t stride = pts.size() > opts.max_points ? pts.size() / opts.max_points : 1;
    for (size_t i = 0; i < pts.size(); i += stride) {
        f << "<circle cx='" << px(pts[i][0]) << "' cy='" << py(pts[i][1]) << "' r='"
          << opts.point_radius << "' fill='" << svg_palette(colors[i]) << "'/>\n";
    }
    if (!opts.title.empty())
        f << "<text x='8' y='16' font-family='monospace' font-size='13'>" << opts.title
          << "</text>\n";
    f << "</svg>\n";
    if (!f) throw IoError("write failed: " + path);
}

// Minimal polyline chart (one curve), axes annotated with min/max.
inline void svg_line_chart(const std::string& path, const std::vector<double>& xs,
                           const std::vector<double>& ys, const std::string& title) {
    if (xs.size() != ys.size() || xs.empty()) throw ShapeError("svg_line_chart: bad series");
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    const int w = 640, h = 400, margin = 40;
    double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
    for (size_t i = 0; i < xs.size(); ++i) {
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    auto px = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (w - 2 * margin); };
    auto py = [&](double y) { return h - margin - (y - ymin) / (ymax - ymin) * (h - 2 * margin); };
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin << "' y2='"
      << h - margin << "' stroke='black'/>\n";
    f << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
      << h - margin << "' stroke='black'/>\n";
    f << "<polyline fill='none' stroke='#4363d8' stroke-width='2' points='";
    for (size_t i = 0; i < xs.size(); ++i) f << px(xs[i]) << ',' << py(ys[i]) << ' ';
    f << "'/>\n";
    for (size_t i = 0; i < xs.size(); ++i)
        f << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i]) << "' r='3' fill='#4363d8'/>\n";
    f << "<text x='8' y='16' font-family='monospace' font-size='13'>" << title << "</text>\n";
    f << "<text x='" << margin << "' y='" << h - 8 << "' font-family='monospace' font-size='11'>"
      << xmin << "</text>\n";
    f << "<text x='" << w - margin << "' y='" << h - 8
      << "' font-family='monospace' font-size='11' text-anchor='end'>" << xmax << "</text>\n";
    f << "<text x='8' y='" << margin << "' font-family='monospace' font-size='11'>" << ymax
      << "</text>\n";
    f << "<text x='8' y='" << h - margin << "' font-family='monospace' font-size='11'>" << ymin
      << "</text>\n";
    f << "</svg>\n";
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace kdm
