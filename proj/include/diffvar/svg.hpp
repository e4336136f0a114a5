#pragma once

#include <optional>
#include <string>
#include <vector>

namespace diffvar {

struct SvgSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal static line chart: axes, ticks, one polyline per series, legend,
// optional dashed horizontal reference line.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<SvgSeries>& series,
                           std::optional<double> dashed_reference);

} // namespace diffvar
