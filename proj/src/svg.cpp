// ---------------------------------------------------------------------------
// Deterministic SVG chart emission.
// ---------------------------------------------------------------------------

#include "oddskit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "oddskit/errors.hpp"

namespace oddskit {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
}

struct axis_range {
    double lo = 0.0;
    double hi = 1.0;

    void expand(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    void pad() {
        if (!(hi > lo)) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double m = 0.04 * (hi - lo);
        lo -= m;
        hi += m;
    }
};

struct frame {
    double x0, y0, x1, y1; // plot rectangle in pixels (y grows downward)
    axis_range xr, yr;

    double px(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); }
    double py(double y) const { return y1 - (y - yr.lo) / (yr.hi - yr.lo) * (y1 - y0); }
};

void open_svg(std::ostringstream& s, int width, int height) {
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
}

void draw_title(std::ostringstream& s, int width, const std::string& title) {
    s << "<text x=\"" << width / 2 << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" "
      << "text-anchor=\"middle\" fill=\"#333\">" << title << "</text>\n";
}

void draw_axes(std::ostringstream& s, const frame& f) {
    s << "<rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(f.x1 - f.x0)
      << "\" height=\"" << num(f.y1 - f.y0) << "\" fill=\"none\" stroke=\"#999\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = f.xr.lo + (f.xr.hi - f.xr.lo) * k / 4.0;
        const double fy = f.yr.lo + (f.yr.hi - f.yr.lo) * k / 4.0;
        s << "<text x=\"" << num(f.px(fx)) << "\" y=\"" << num(f.y1 + 16)
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\" "
             "fill=\"#555\">"
          << num(fx) << "</text>\n";
        s << "<text x=\"" << num(f.x0 - 6) << "\" y=\"" << num(f.py(fy) + 3)
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\" fill=\"#555\">"
          << num(fy) << "</text>\n";
        if (k > 0 && k < 4) {
            s << "<line x1=\"" << num(f.x0) << "\" y1=\"" << num(f.py(fy)) << "\" x2=\""
              << num(f.x1) << "\" y2=\"" << num(f.py(fy))
              << "\" stroke=\"#eee\" stroke-width=\"1\"/>\n";
        }
    }
}

void save(const std::string& path, const std::ostringstream& s) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write chart '" + path + "'");
    out << s.str() << "</svg>\n";
}

} // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::vector<chart_series>& series,
                      const std::vector<chart_band>& bands,
                      const std::vector<chart_marker>& markers, int width, int height) {
    frame f{60.0, 34.0, width - 16.0, height - 30.0, {}, {}};
    f.xr.lo = f.yr.lo = std::numeric_limits<double>::infinity();
    f.xr.hi = f.yr.hi = -std::numeric_limits<double>::infinity();
    for (const auto& sr : series)
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
            f.xr.expand(sr.x[i]);
            if (i < sr.y.size()) f.yr.expand(sr.y[i]);
        }
    for (const auto& b : bands)
        for (std::size_t i = 0; i < b.x.size(); ++i) {
            f.xr.expand(b.x[i]);
            if (i < b.lo.size()) f.yr.expand(b.lo[i]);
            if (i < b.hi.size()) f.yr.expand(b.hi[i]);
        }
    if (!std::isfinite(f.xr.lo)) f.xr = {0.0, 1.0};
    if (!std::isfinite(f.yr.lo)) f.yr = {0.0, 1.0};
    f.xr.pad();
    f.yr.pad();

    std::ostringstream s;
    open_svg(s, width, height);
    draw_title(s, width, title);
    draw_axes(s, f);

    for (const auto& b : bands) {
        std::ostringstream pts;
        for (std::size_t i = 0; i < b.x.size(); ++i)
            if (std::isfinite(b.hi[i])) pts << num(f.px(b.x[i])) << "," << num(f.py(b.hi[i])) << " ";
        for (std::size_t i = b.x.size(); i-- > 0;)
            if (std::isfinite(b.lo[i])) pts << num(f.px(b.x[i])) << "," << num(f.py(b.lo[i])) << " ";
        s << "<polygon points=\"" << pts.str() << "\" fill=\"#1f77b4\" fill-opacity=\"0.15\" "
             "stroke=\"none\"/>\n";
    }

    for (const auto& mk : markers) {
        s << "<line x1=\"" << num(f.px(mk.x)) << "\" y1=\"" << num(f.y0) << "\" x2=\""
          << num(f.px(mk.x)) << "\" y2=\"" << num(f.y1)
          << "\" stroke=\"#aaa\" stroke-dasharray=\"4 3\"/>\n";
        if (!mk.label.empty())
            s << "<text x=\"" << num(f.px(mk.x) + 3) << "\" y=\"" << num(f.y0 + 12)
              << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#777\">" << mk.label
              << "</text>\n";
    }

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& sr = series[si];
        const char* color = kPalette[si % kPaletteSize];
        std::ostringstream pts;
        bool open = false;
        for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i) {
            if (!std::isfinite(sr.y[i])) {
                if (open) {
                    s << "<polyline points=\"" << pts.str()
                      << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\"/>\n";
                    pts.str("");
                    open = false;
                }
                continue;
            }
            pts << num(f.px(sr.x[i])) << "," << num(f.py(sr.y[i])) << " ";
            open = true;
        }
        if (open)
            s << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
              << "\" stroke-width=\"1.2\"/>\n";
        s << "<text x=\"" << num(f.x0 + 8 + 120.0 * static_cast<double>(si)) << "\" y=\""
          << num(f.y0 - 6) << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color
          << "\">" << sr.label << "</text>\n";
    }
    save(path, s);
}

void write_heatmap(const std::string& path, const std::string& title,
                   const std::vector<double>& row_axis, const std::vector<double>& col_axis,
                   const std::vector<double>& values, const std::string& row_label,
                   const std::string& col_label, int width, int height) {
    const std::size_t n_row = row_axis.size();
    const std::size_t n_col = col_axis.size();
    if (n_row == 0 || n_col == 0 || values.size() != n_row * n_col)
        throw data_error("heatmap: axis/value sizes disagree");

    double vlo = std::numeric_limits<double>::infinity();
    double vhi = -std::numeric_limits<double>::infinity();
    for (double v : values)
        if (std::isfinite(v)) {
            vlo = std::min(vlo, v);
            vhi = std::max(vhi, v);
        }
    if (!std::isfinite(vlo)) {
        vlo = 0.0;
        vhi = 1.0;
    }
    if (!(vhi > vlo)) vhi = vlo + 1.0;

    const double x0 = 70.0, y0 = 34.0, x1 = width - 20.0, y1 = height - 40.0;
    const double cw = (x1 - x0) / static_cast<double>(n_col);
    const double ch = (y1 - y0) / static_cast<double>(n_row);

    std::ostringstream s;
    open_svg(s, width, height);
    draw_title(s, width, title);
    for (std::size_t i = 0; i < n_row; ++i)
        for (std::size_t j = 0; j < n_col; ++j) {
            const double v = values[i * n_col + j];
            if (!std::isfinite(v)) continue;
            const double u = (v - vlo) / (vhi - vlo);
            // White -> blue ramp.
            const int r = static_cast<int>(std::lround(255.0 - 224.0 * u));
            const int g = static_cast<int>(std::lround(255.0 - 136.0 * u));
            const int b = 255;
            char color[10];
            std::snprintf(color, sizeof color, "#%02x%02x%02x", r, g, b);
            s << "<rect x=\"" << num(x0 + cw * static_cast<double>(j)) << "\" y=\""
              << num(y1 - ch * static_cast<double>(i + 1)) << "\" width=\"" << num(cw)
              << "\" height=\"" << num(ch) << "\" fill=\"" << color << "\"/>\n";
        }
    s << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(x1 - x0)
      << "\" height=\"" << num(y1 - y0) << "\" fill=\"none\" stroke=\"#999\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const std::size_t j = std::min(n_col - 1, static_cast<std::size_t>(
                                                      std::lround(k / 4.0 * double(n_col - 1))));
        const std::size_t i = std::min(n_row - 1, static_cast<std::size_t>(
                                                      std::lround(k / 4.0 * double(n_row - 1))));
        s << "<text x=\"" << num(x0 + cw * (static_cast<double>(j) + 0.5)) << "\" y=\""
          << num(y1 + 14) << "\" font-family=\"sans-serif\" font-size=\"10\" "
          << "text-anchor=\"middle\" fill=\"#555\">" << num(col_axis[j]) << "</text>\n";
        s << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(y1 - ch * (static_cast<double>(i) + 0.5) + 3)
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\" fill=\"#555\">"
          << num(row_axis[i]) << "</text>\n";
    }
    s << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(y1 + 30)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333\">"
      << col_label << "</text>\n";
    s << "<text x=\"14\" y=\"" << num((y0 + y1) / 2)
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\" transform=\"rotate(-90 14 "
      << num((y0 + y1) / 2) << ")\" text-anchor=\"middle\">" << row_label << "</text>\n";
    s << "<text x=\"" << num(x1) << "\" y=\"" << num(y0 - 6)
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\" fill=\"#555\">range ["
      << num(vlo) << ", " << num(vhi) << "]</text>\n";
    save(path, s);
}

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& labels, const std::vector<double>& values,
                     int width, int height) {
    if (labels.size() != values.size()) throw data_error("bar chart: label/value sizes disagree");
    const double x0 = 60.0, y0 = 34.0, x1 = width - 20.0, y1 = height - 40.0;
    double vhi = 0.0;
    for (double v : values)
        if (std::isfinite(v)) vhi = std::max(vhi, v);
    if (!(vhi > 0.0)) vhi = 1.0;
    vhi *= 1.15;

    std::ostringstream s;
    open_svg(s, width, height);
    draw_title(s, width, title);
    s << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x1) << "\" y2=\""
      << num(y1) << "\" stroke=\"#999\"/>\n";
    const std::size_t n = labels.size();
    const double slot = (x1 - x0) / static_cast<double>(n == 0 ? 1 : n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::isfinite(values[i]) ? std::max(values[i], 0.0) : 0.0;
        const double bh = (y1 - y0) * v / vhi;
        const double bx = x0 + slot * static_cast<double>(i) + slot * 0.15;
        s << "<rect x=\"" << num(bx) << "\" y=\"" << num(y1 - bh) << "\" width=\""
          << num(slot * 0.7) << "\" height=\"" << num(bh) << "\" fill=\""
          << kPalette[i % kPaletteSize] << "\"/>\n";
        s << "<text x=\"" << num(bx + slot * 0.35) << "\" y=\"" << num(y1 - bh - 5)
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\" "
             "fill=\"#333\">"
          << num(values[i]) << "</text>\n";
        s << "<text x=\"" << num(bx + slot * 0.35) << "\" y=\"" << num(y1 + 16)
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" "
             "fill=\"#333\">"
          << labels[i] << "</text>\n";
    }
    save(path, s);
}

} // namespace oddskit
