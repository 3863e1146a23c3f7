#pragma once

// ---------------------------------------------------------------------------
// Minimal deterministic SVG chart emission: line charts with optional
// confidence bands and event markers, grid heatmaps, and bar charts.  No
// external renderer; numbers are formatted with fixed precision so repeated
// runs produce identical bytes.
// ---------------------------------------------------------------------------

#include <string>
#include <vector>

namespace oddskit {

struct chart_series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y; // NaN breaks the polyline
};

struct chart_band {
    std::vector<double> x;
    std::vector<double> lo;
    std::vector<double> hi;
};

struct chart_marker {
    double x = 0.0;
    std::string label;
};

// Line chart with shared axes; bands draw behind the lines, markers as
// dashed verticals.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::vector<chart_series>& series,
                      const std::vector<chart_band>& bands = {},
                      const std::vector<chart_marker>& markers = {}, int width = 960,
                      int height = 420);

// Heatmap of a row-major grid values[i * n_col + j] over (row_axis[i],
// col_axis[j]); NaN cells are left blank.
void write_heatmap(const std::string& path, const std::string& title,
                   const std::vector<double>& row_axis, const std::vector<double>& col_axis,
                   const std::vector<double>& values, const std::string& row_label,
                   const std::string& col_label, int width = 720, int height = 480);

// Horizontal-labeled bar chart; values are printed above each bar.
void write_bar_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& labels, const std::vector<double>& values,
                     int width = 720, int height = 360);

} // namespace oddskit
