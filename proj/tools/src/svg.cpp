#include "randctl_cli/svg.hpp"

#include <randctl/problem.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <vector>

namespace randctl::cli {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kMargin = 56.0;

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    /// Maps v into [a, b]; degenerate ranges map to the midpoint.
    double map(double v, double a, double b) const {
        if (!(hi > lo)) {
            return 0.5 * (a + b);
        }
        return a + (v - lo) / (hi - lo) * (b - a);
    }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::size_t require(const csv::Table& table, std::string_view name) {
    const int c = table.column(name);
    if (c < 0) {
        throw ValidationError("csv", "missing column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(c);
}

void open_document(std::ostringstream& s, std::string_view title) {
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << title << "</text>\n";
}

void axes(std::ostringstream& s, const Range& x, const Range& y, std::string_view xlabel, std::string_view ylabel) {
    const double x0 = kMargin;
    const double x1 = kWidth - kMargin;
    const double y0 = kHeight - kMargin;
    const double y1 = kMargin;
    s << "<g stroke=\"black\" stroke-width=\"1\">"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\"/>"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\"/></g>\n";
    s << "<g font-family=\"sans-serif\" font-size=\"11\">"
      << "<text x=\"" << x0 << "\" y=\"" << y0 + 16 << "\">" << num(x.lo) << "</text>"
      << "<text x=\"" << x1 << "\" y=\"" << y0 + 16 << "\" text-anchor=\"end\">" << num(x.hi) << "</text>"
      << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 << "\" text-anchor=\"end\">" << num(y.lo) << "</text>"
      << "<text x=\"" << x0 - 4 << "\" y=\"" << y1 + 4 << "\" text-anchor=\"end\">" << num(y.hi) << "</text>"
      << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 14 << "\" text-anchor=\"middle\">" << xlabel << "</text>"
      << "<text x=\"14\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 14 " << kHeight / 2
      << ")\" text-anchor=\"middle\">" << ylabel << "</text></g>\n";
}

double sx(const Range& r, double v) { return r.map(v, kMargin, kWidth - kMargin); }
double sy(const Range& r, double v) { return r.map(v, kHeight - kMargin, kMargin); }

std::string value_ladder(const csv::Table& t) {
    const auto nc = require(t, "n");
    const auto vc = require(t, "value");
    std::vector<std::pair<double, double>> pts;
    Range x;
    Range y;
    for (const auto& row : t.rows) {
        const double n = csv::to_number(row[nc]);
        const double v = csv::to_number(row[vc]);
        pts.emplace_back(n, v);
        x.add(std::log2(n));
        y.add(v);
    }
    std::ostringstream s;
    open_document(s, "penalized value by level");
    axes(s, x, y, "log2 n", "v^n(0, x0, a0)");
    // Staircase: hold each level's value until the next level.
    std::string d;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double px_i = sx(x, std::log2(pts[i].first));
        const double py_i = sy(y, pts[i].second);
        d += (i == 0 ? "M" : " H") + px(px_i) + (i == 0 ? " " + px(py_i) : " V" + px(py_i));
    }
    s << "<path d=\"" << d << "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
    for (const auto& [n, v] : pts) {
        s << "<circle cx=\"" << px(sx(x, std::log2(n))) << "\" cy=\"" << px(sy(y, v))
          << "\" r=\"3.5\" fill=\"#1f77b4\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

/// Diverging blue-white-red scale on [-m, m].
std::string color(double v, double m) {
    const double u = m > 0.0 ? std::clamp(v / m, -1.0, 1.0) : 0.0;
    const auto c = [](double w) { return static_cast<int>(std::lround(255.0 * (1.0 - w))); };
    char buf[16];
    if (u >= 0.0) {
        std::snprintf(buf, sizeof buf, "#ff%02x%02x", c(u), c(u));
    } else {
        std::snprintf(buf, sizeof buf, "#%02x%02xff", c(-u), c(-u));
    }
    return buf;
}

std::string residual_heatmap(const csv::Table& t) {
    const auto tc = require(t, "t");
    const auto xc = require(t, "x0");
    const auto rc = require(t, "residual");
    std::vector<double> ts;
    std::vector<double> xs;
    Range tr;
    Range xr;
    double m = 0.0;
    for (const auto& row : t.rows) {
        ts.push_back(csv::to_number(row[tc]));
        xs.push_back(csv::to_number(row[xc]));
        tr.add(ts.back());
        xr.add(xs.back());
        m = std::max(m, std::abs(csv::to_number(row[rc])));
    }
    auto distinct = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v.size();
    };
    const double cw = (kWidth - 2 * kMargin - 60) / static_cast<double>(std::max<std::size_t>(distinct(xs), 1));
    const double ch = (kHeight - 2 * kMargin) / static_cast<double>(std::max<std::size_t>(distinct(ts), 1));
    const auto map_x = [&](double v) { return xr.map(v, kMargin, kWidth - kMargin - 60 - cw); };
    const auto map_t = [&](double v) { return tr.map(v, kHeight - kMargin - ch, kMargin); };

    std::ostringstream s;
    open_document(s, "HJB residual");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        s << "<rect x=\"" << px(map_x(xs[i])) << "\" y=\"" << px(map_t(ts[i])) << "\" width=\"" << px(cw)
          << "\" height=\"" << px(ch) << "\" fill=\"" << color(csv::to_number(t.rows[i][rc]), m) << "\"/>\n";
    }
    Range axis_x = xr;
    Range axis_t = tr;
    axes(s, axis_x, axis_t, "x0", "t");
    // Legend: color scale from -max|r| to +max|r|.
    const double lx = kWidth - kMargin - 30;
    const int bands = 11;
    const double bh = (kHeight - 2 * kMargin) / bands;
    s << "<g id=\"legend\">\n";
    for (int b = 0; b < bands; ++b) {
        const double v = m * (1.0 - 2.0 * b / (bands - 1.0));
        s << "<rect x=\"" << px(lx) << "\" y=\"" << px(kMargin + b * bh) << "\" width=\"14\" height=\"" << px(bh)
          << "\" fill=\"" << color(v, m) << "\"/>\n";
    }
    s << "<text x=\"" << px(lx + 18) << "\" y=\"" << px(kMargin + 8)
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(m) << "</text>\n"
      << "<text x=\"" << px(lx + 18) << "\" y=\"" << px(kHeight - kMargin)
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(-m) << "</text>\n"
      << "<text x=\"" << px(lx) << "\" y=\"" << px(kMargin - 8)
      << "\" font-family=\"sans-serif\" font-size=\"10\">residual</text>\n</g>\n";
    s << "</svg>\n";
    return s.str();
}

std::string path_fan(const csv::Table& t) {
    const auto pc = require(t, "path");
    const auto tc = require(t, "t");
    const auto xc = require(t, "x0");
    std::map<std::string, std::vector<std::pair<double, double>>> paths;
    Range tr;
    Range xr;
    for (const auto& row : t.rows) {
        const double tt = csv::to_number(row[tc]);
        const double x = csv::to_number(row[xc]);
        paths[row[pc]].emplace_back(tt, x);
        tr.add(tt);
        xr.add(x);
    }
    std::ostringstream s;
    open_document(s, "simulated paths");
    axes(s, tr, xr, "t", "x0");
    s << "<g fill=\"none\" stroke=\"#1f77b4\" stroke-opacity=\"0.35\" stroke-width=\"1\">\n";
    for (const auto& [id, pts] : paths) {
        std::string d;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            d += (i == 0 ? "M" : " L") + px(sx(tr, pts[i].first)) + " " + px(sy(xr, pts[i].second));
        }
        s << "<path d=\"" << d << "\"/>\n";
    }
    s << "</g>\n</svg>\n";
    return s.str();
}

} // namespace

std::optional<PlotKind> parse_plot_kind(std::string_view name) noexcept {
    if (name == "value-ladder") {
        return PlotKind::value_ladder;
    }
    if (name == "residual-heatmap") {
        return PlotKind::residual_heatmap;
    }
    if (name == "path-fan") {
        return PlotKind::path_fan;
    }
    return std::nullopt;
}

std::string render_svg(PlotKind kind, const csv::Table& table) {
    if (table.rows.empty()) {
        throw ValidationError("csv", "no data rows");
    }
    switch (kind) {
    case PlotKind::value_ladder:
        return value_ladder(table);
    case PlotKind::residual_heatmap:
        return residual_heatmap(table);
    case PlotKind::path_fan:
        return path_fan(table);
    }
    throw ValidationError("kind", "unknown plot kind");
}

} // namespace randctl::cli
