#pragma once

#include <array>
#include <string>
#include <vector>

#include "geoadapt/common.hpp"

namespace geoadapt::plots {

void save_text(const std::string& path, const std::string& content);

/// RFC-4180-ish CSV; fields containing commas or quotes get quoted.
std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows);

struct Series {
    std::string name;
    std::vector<std::array<double, 2>> points;  // x, y
};

/// Self-contained SVG line chart; deterministic output for fixed input.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    std::string label;
    size_t group = 0;
};

std::string svg_scatter(const std::string& title, const std::vector<ScatterPoint>& points);

std::string svg_heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels,
                        const std::vector<std::vector<double>>& values);

std::string svg_bars(const std::string& title, const std::vector<std::string>& labels,
                     const std::vector<double>& values);

}  // namespace geoadapt::plots
