#pragma once
// Minimal static SVG charts: line plots and grouped bars.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace semiformer::experiment::svg {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct Bar {
    std::string label;
    std::vector<std::optional<double>> values;  // one per bar group entry
};

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

namespace detail {

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

inline std::string f2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Frame {
    double width = 720, height = 420;
    double left = 60, right = 180, top = 36, bottom = 48;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline void axes(std::ostringstream& o, const Frame& f, const std::string& title, const std::string& xlabel,
                 const std::string& ylabel, bool x_ticks = true) {
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
    const double xa = f.left, xb = f.width - f.right, ya = f.top, yb = f.height - f.bottom;
    o << "<line x1=\"" << xa << "\" y1=\"" << yb << "\" x2=\"" << xb << "\" y2=\"" << yb << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << xa << "\" y1=\"" << ya << "\" x2=\"" << xa << "\" y2=\"" << yb << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
        const double y = f.py(yv);
        o << "<line x1=\"" << xa << "\" y1=\"" << f2(y) << "\" x2=\"" << xb << "\" y2=\"" << f2(y)
          << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << xa - 6 << "\" y=\"" << f2(y + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
          << tick(yv) << "</text>\n";
        if (x_ticks) {
            const double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
            o << "<text x=\"" << f2(f.px(xv)) << "\" y=\"" << yb + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
              << tick(xv) << "</text>\n";
        }
    }
    o << "<text x=\"" << (xa + xb) / 2 << "\" y=\"" << f.height - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << escape(xlabel) << "</text>\n";
    o << "<text x=\"16\" y=\"" << (ya + yb) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (ya + yb) / 2 << ")\">" << escape(ylabel) << "</text>\n";
}

inline void legend(std::ostringstream& o, const Frame& f, const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double x = f.width - f.right + 12, y = f.top + 16.0 * static_cast<double>(i);
        o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[i % 10]
          << "\"/>\n";
        o << "<text x=\"" << x + 14 << "\" y=\"" << y + 9 << "\" font-size=\"11\">" << escape(names[i]) << "</text>\n";
    }
}

inline std::string open(const Frame& f) {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
      << "\" font-family=\"sans-serif\">\n";
    return o.str();
}

}  // namespace detail

inline std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             const std::vector<Series>& series) {
    detail::Frame f;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    f.x0 = xmin, f.x1 = xmax, f.y0 = ymin - pad, f.y1 = ymax + pad;

    std::ostringstream o;
    o << detail::open(f);
    detail::axes(o, f, title, xlabel, ylabel);
    std::vector<std::string> names;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        names.push_back(s.name);
        o << "<polyline fill=\"none\" stroke-width=\"1.8\" stroke=\"" << kPalette[k % 10] << "\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            o << (i ? " " : "") << detail::f2(f.px(s.x[i])) << "," << detail::f2(f.py(s.y[i]));
        o << "\"/>\n";
        if (s.x.size() == 1)
            o << "<circle cx=\"" << detail::f2(f.px(s.x[0])) << "\" cy=\"" << detail::f2(f.py(s.y[0]))
              << "\" r=\"3\" fill=\"" << kPalette[k % 10] << "\"/>\n";
    }
    detail::legend(o, f, names);
    o << "</svg>\n";
    return o.str();
}

/// Grouped bars: one group per `Bar`, one coloured bar per value.
inline std::string bar_chart(const std::string& title, const std::string& ylabel,
                             const std::vector<std::string>& value_names, const std::vector<Bar>& bars) {
    detail::Frame f;
    f.bottom = 90;
    double ymax = 0;
    for (const auto& b : bars)
        for (const auto& v : b.values)
            if (v) ymax = std::max(ymax, *v);
    f.x0 = 0, f.x1 = static_cast<double>(std::max<std::size_t>(1, bars.size()));
    f.y0 = 0, f.y1 = ymax > 0 ? ymax * 1.1 : 1.0;

    std::ostringstream o;
    o << detail::open(f);
    detail::axes(o, f, title, "", ylabel, false);
    const double group_w = f.px(1) - f.px(0);
    for (std::size_t g = 0; g < bars.size(); ++g) {
        const auto& b = bars[g];
        const double n = static_cast<double>(std::max<std::size_t>(1, b.values.size()));
        const double w = 0.8 * group_w / n;
        for (std::size_t k = 0; k < b.values.size(); ++k) {
            if (!b.values[k]) continue;
            const double x = f.px(static_cast<double>(g)) + 0.1 * group_w + w * static_cast<double>(k);
            const double y = f.py(*b.values[k]);
            o << "<rect x=\"" << detail::f2(x) << "\" y=\"" << detail::f2(y) << "\" width=\"" << detail::f2(w)
              << "\" height=\"" << detail::f2(f.py(0) - y) << "\" fill=\"" << kPalette[k % 10] << "\"/>\n";
        }
        const double cx = f.px(static_cast<double>(g) + 0.5);
        o << "<text x=\"" << detail::f2(cx) << "\" y=\"" << f.height - f.bottom + 14
          << "\" text-anchor=\"end\" font-size=\"11\" transform=\"rotate(-30 " << detail::f2(cx) << " "
          << f.height - f.bottom + 14 << ")\">" << detail::escape(b.label) << "</text>\n";
    }
    detail::legend(o, f, value_names);
    o << "</svg>\n";
    return o.str();
}

}  // namespace semiformer::experiment::svg
