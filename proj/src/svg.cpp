#include "twinbeam/svg.hpp"

#include "twinbeam/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace twinbeam {

namespace {

constexpr double width = 640.0;
constexpr double height = 420.0;
constexpr double left = 70.0;
constexpr double right = 170.0;
constexpr double top = 40.0;
constexpr double bottom = 55.0;

const char* const palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string escape(const std::string& s)
{
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

double nice_step(double span)
{
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    return (f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0) * mag;
}

std::vector<double> linear_ticks(double lo, double hi)
{
    const double step = nice_step(hi - lo);
    std::vector<double> ticks;
    for (long k = static_cast<long>(std::ceil(lo / step - 1e-9)); k * step <= hi + 1e-9 * step; ++k)
        ticks.push_back(static_cast<double>(k) * step);
    return ticks;
}

std::vector<double> log_ticks(double lo, double hi)
{
    std::vector<double> ticks;
    for (int e = static_cast<int>(std::floor(std::log10(lo))); e <= static_cast<int>(std::ceil(std::log10(hi))); ++e)
        for (double m : {1.0, 2.0, 5.0}) {
            const double t = m * std::pow(10.0, e);
            if (t >= lo * (1 - 1e-9) && t <= hi * (1 + 1e-9)) ticks.push_back(t);
        }
    return ticks;
}

}  // namespace

std::string line_plot_svg(const std::vector<PlotSeries>& series, const PlotOptions& options)
{
    double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
    double y_lo = x_lo, y_hi = -x_lo;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size() || (!s.y_error.empty() && s.y_error.size() != s.y.size()))
            throw ConfigError("plot series '" + s.name + "' has mismatched lengths");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (options.log_x && s.x[i] <= 0.0) throw ConfigError("log axis needs positive x values");
            const double e = s.y_error.empty() ? 0.0 : s.y_error[i];
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i] - e);
            y_hi = std::max(y_hi, s.y[i] + e);
        }
    }
    if (!std::isfinite(x_lo)) {
        x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
    }
    if (std::isfinite(options.reference_y)) {
        y_lo = std::min(y_lo, options.reference_y);
        y_hi = std::max(y_hi, options.reference_y);
    }
    if (x_hi == x_lo) x_lo -= 0.5, x_hi += 0.5;
    if (options.log_x && x_lo <= 0.0) x_lo = x_hi / 10.0;
    const double pad = (y_hi > y_lo ? y_hi - y_lo : 1.0) * 0.08;
    y_lo -= pad;
    y_hi += pad;

    const double pw = width - left - right;
    const double ph = height - top - bottom;
    const auto tx = [&](double x) {
        const double f = options.log_x ? (std::log(x) - std::log(x_lo)) / (std::log(x_hi) - std::log(x_lo))
                                       : (x - x_lo) / (x_hi - x_lo);
        return left + f * pw;
    };
    const auto ty = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
        << escape(options.title) << "</text>\n";
    svg << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
        << "\" fill=\"none\" stroke=\"black\"/>\n";

    for (double t : options.log_x ? log_ticks(x_lo, x_hi) : linear_ticks(x_lo, x_hi)) {
        const double x = tx(t);
        svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(x) << "\" y2=\""
            << num(top + ph + 5) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << num(x) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">" << label(t)
            << "</text>\n";
    }
    for (double t : linear_ticks(y_lo, y_hi)) {
        const double y = ty(t);
        svg << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left) << "\" y2=\""
            << num(y) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << num(left - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << label(t)
            << "</text>\n";
    }
    svg << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 12) << "\" text-anchor=\"middle\">"
        << escape(options.x_label) << "</text>\n";
    svg << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << num(top + ph / 2) << ")\">" << escape(options.y_label) << "</text>\n";

    if (std::isfinite(options.reference_y)) {
        svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(ty(options.reference_y)) << "\" x2=\"" << num(left + pw)
            << "\" y2=\"" << num(ty(options.reference_y)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    }

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* colour = palette[k % std::size(palette)];
        std::string points;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (!points.empty()) points += ' ';
            points += num(tx(s.x[i])) + "," + num(ty(s.y[i]));
        }
        svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"" << points
            << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            const double x = tx(s.x[i]);
            if (!s.y_error.empty() && s.y_error[i] > 0.0) {
                svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(ty(s.y[i] - s.y_error[i])) << "\" x2=\"" << num(x)
                    << "\" y2=\"" << num(ty(s.y[i] + s.y_error[i])) << "\" stroke=\"" << colour << "\"/>\n";
            }
            svg << "<circle cx=\"" << num(x) << "\" cy=\"" << num(ty(s.y[i])) << "\" r=\"2.5\" fill=\"" << colour
                << "\"/>\n";
        }
        const double ly = top + 12 + 18.0 * static_cast<double>(k);
        svg << "<line x1=\"" << num(left + pw + 12) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw + 32)
            << "\" y2=\"" << num(ly) << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << num(left + pw + 38) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.name)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace twinbeam
