#pragma once

#include <optional>
#include <string>
#include <vector>

namespace blackout {

struct PlotSeries {
    std::string name;
    std::vector<double> x;  // ignored by bar charts
    std::vector<double> y;
    // Absolute lower/upper bounds of the error bar; empty means no bars.
    std::vector<double> low;
    std::vector<double> high;
};

struct PlotLabels {
    std::string title;
    std::string x_label;
    std::string y_label;
};

/// Grouped bars: one group per category, one bar per series.
std::string bar_chart_svg(const PlotLabels& labels, const std::vector<std::string>& categories,
                          const std::vector<PlotSeries>& series);

/// Polylines with markers and optional error bars.
std::string line_chart_svg(const PlotLabels& labels, const std::vector<PlotSeries>& series,
                           std::optional<double> reference_y = std::nullopt);

}  // namespace blackout
