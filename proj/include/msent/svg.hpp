#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "msent/error.hpp"

namespace msent::svg {

struct Line {
    std::string label;
    std::vector<double> values;
};

struct ChartOptions {
    std::string title;
    std::string x_label = "day";
    std::string y_label;
    int width = 900;
    int height = 360;
};

inline std::string escape(const std::string& s) {
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

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

/// Static line chart; non-finite points break the polyline.
inline std::string line_chart(const std::vector<Line>& lines, const ChartOptions& opt) {
    require(!lines.empty(), ErrorKind::empty_input, "line chart needs at least one series");
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    std::size_t n = 0;
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto& l : lines) {
        n = std::max(n, l.values.size());
        for (double v : l.values)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double left = 60, right = 150, top = 30, bottom = 40;
    const double pw = opt.width - left - right;
    const double ph = opt.height - top - bottom;
    const auto xpos = [&](std::size_t i) { return left + (n > 1 ? pw * double(i) / double(n - 1) : 0.0); };
    const auto ypos = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << escape(opt.title) << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = lo + (hi - lo) * t / 4.0;
        const double y = ypos(v);
        o << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << y << "\" y2=\"" << y
          << "\" stroke=\"#eee\"/>\n";
        o << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt(v)
          << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 8 << "\" text-anchor=\"middle\">"
      << escape(opt.x_label) << " (0.." << (n ? n - 1 : 0) << ")</text>\n";
    if (!opt.y_label.empty())
        o << "<text x=\"14\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 14 " << top + ph / 2
          << ")\" text-anchor=\"middle\">" << escape(opt.y_label) << "</text>\n";

    for (std::size_t s = 0; s < lines.size(); ++s) {
        const char* colour = palette[s % 6];
        std::string points;
        const auto flush = [&]() {
            if (!points.empty())
                o << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.2\" points=\""
                  << points << "\"/>\n";
            points.clear();
        };
        for (std::size_t i = 0; i < lines[s].values.size(); ++i) {
            const double v = lines[s].values[i];
            if (!std::isfinite(v)) {
                flush();
                continue;
            }
            points += fmt(xpos(i)) + "," + fmt(ypos(v)) + " ";
        }
        flush();
        const double ly = top + 14.0 * double(s) + 8;
        o << "<line x1=\"" << left + pw + 10 << "\" x2=\"" << left + pw + 28 << "\" y1=\"" << ly << "\" y2=\""
          << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << left + pw + 32 << "\" y=\"" << ly + 4 << "\">" << escape(lines[s].label)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace msent::svg
