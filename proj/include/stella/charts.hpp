#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "stella/errors.hpp"

namespace stella {

struct ChartSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline std::string svg_num(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

inline const char* series_color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[i % 8];
}

}  // namespace detail

// Static SVG line chart; y axis fixed to [0, 1] (accuracy scale).
inline std::string render_line_chart(const std::string& title, const std::string& x_label,
                                     const std::vector<ChartSeries>& series) {
    if (series.empty()) throw EmptyInput("render_line_chart: no series");
    const double w = 640, h = 420, ml = 60, mr = 160, mt = 50, mb = 50;
    double xmin = series[0].x.front(), xmax = series[0].x.back();
    for (const auto& s : series) {
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double v) { return h - mb - v * (h - mt - mb); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
        << "</text>\n";
    for (int g = 0; g <= 5; ++g) {
        const double v = g / 5.0;
        svg << "<line x1=\"" << detail::svg_num(ml) << "\" y1=\"" << detail::svg_num(py(v)) << "\" x2=\""
            << detail::svg_num(w - mr) << "\" y2=\"" << detail::svg_num(py(v))
            << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << detail::svg_num(ml - 8) << "\" y=\"" << detail::svg_num(py(v) + 4)
            << "\" text-anchor=\"end\" font-size=\"11\">" << detail::svg_num(v) << "</text>\n";
    }
    svg << "<text x=\"" << (ml + (w - ml - mr) / 2) << "\" y=\"" << h - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        svg << "<polyline fill=\"none\" stroke=\"" << detail::series_color(si) << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) svg << ' ';
            svg << detail::svg_num(px(s.x[i])) << ',' << detail::svg_num(py(s.y[i]));
        }
        svg << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            svg << "<circle cx=\"" << detail::svg_num(px(s.x[i])) << "\" cy=\"" << detail::svg_num(py(s.y[i]))
                << "\" r=\"3\" fill=\"" << detail::series_color(si) << "\"/>\n";
        }
        svg << "<text x=\"" << detail::svg_num(w - mr + 12) << "\" y=\"" << detail::svg_num(mt + 18.0 * si)
            << "\" font-size=\"12\" fill=\"" << detail::series_color(si) << "\">" << s.name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

// Heatmap of an accuracy grid (values in [0,1]).
inline std::string render_heatmap(const std::string& title, const std::vector<std::vector<double>>& grid,
                                  const std::string& x_label, const std::string& y_label) {
    if (grid.empty() || grid[0].empty()) throw EmptyInput("render_heatmap: empty grid");
    const std::size_t rows = grid.size(), cols = grid[0].size();
    const double cellw = 56, cellh = 40, ml = 80, mt = 60;
    const double w = ml + cellw * static_cast<double>(cols) + 40;
    const double h = mt + cellh * static_cast<double>(rows) + 60;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
        << "</text>\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = std::clamp(grid[r][c], 0.0, 1.0);
            const int red = static_cast<int>(255 * (1.0 - v));
            const int green = static_cast<int>(255 * v);
            const double x = ml + cellw * static_cast<double>(c);
            const double y = mt + cellh * static_cast<double>(r);
            svg << "<rect x=\"" << detail::svg_num(x) << "\" y=\"" << detail::svg_num(y) << "\" width=\""
                << cellw << "\" height=\"" << cellh << "\" fill=\"rgb(" << red << ',' << green
                << ",120)\" stroke=\"white\"/>\n";
            svg << "<text x=\"" << detail::svg_num(x + cellw / 2) << "\" y=\""
                << detail::svg_num(y + cellh / 2 + 4) << "\" text-anchor=\"middle\" font-size=\"11\">"
                << detail::svg_num(v) << "</text>\n";
        }
        svg << "<text x=\"" << detail::svg_num(ml - 10) << "\" y=\""
            << detail::svg_num(mt + cellh * static_cast<double>(r) + cellh / 2 + 4)
            << "\" text-anchor=\"end\" font-size=\"11\">" << r << "</text>\n";
    }
    for (std::size_t c = 0; c < cols; ++c) {
        svg << "<text x=\"" << detail::svg_num(ml + cellw * static_cast<double>(c) + cellw / 2) << "\" y=\""
            << detail::svg_num(mt - 8) << "\" text-anchor=\"middle\" font-size=\"11\">" << c << "</text>\n";
    }
    svg << "<text x=\"" << w / 2 << "\" y=\"" << h - 14 << "\" text-anchor=\"middle\" font-size=\"12\">"
        << x_label << "</text>\n";
    svg << "<text x=\"16\" y=\"" << mt - 30 << "\" font-size=\"12\">" << y_label << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << content;
}

}  // namespace stella
