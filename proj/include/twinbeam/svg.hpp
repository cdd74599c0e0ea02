#pragma once

#include <string>
#include <vector>

namespace twinbeam {

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> y_error;  // optional; empty or same length as y
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    // Horizontal reference line (e.g. shot noise); drawn when finite.
    double reference_y = 1.0;
};

/// Minimal standalone SVG line chart: axes with ticks, one polyline per series
/// with markers and error bars, and a legend. Output is deterministic.
std::string line_plot_svg(const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace twinbeam
