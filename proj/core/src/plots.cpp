#include "geoadapt/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace geoadapt::plots {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string esc(const std::string& s) {
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

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

struct Range {
    double lo = 0.0, hi = 1.0;
    void expand(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (hi <= lo) hi = lo + 1.0;
        double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
    double map(double v, double out_lo, double out_hi) const {
        return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo);
    }
};

std::string svg_open(const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) +
                    "\" height=\"" + num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " +
                    num(kHeight) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" " +
         "font-family=\"sans-serif\" font-size=\"15\">" + esc(title) + "</text>\n";
    return s;
}

void axes(std::string& s, const Range& xr, const Range& yr, const std::string& x_label,
          const std::string& y_label) {
    s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kHeight - kBottom) + "\" x2=\"" +
         num(kWidth - kRight) + "\" y2=\"" + num(kHeight - kBottom) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(kHeight - kBottom) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        double px = xr.map(fx, kLeft, kWidth - kRight);
        double py = yr.map(fy, kHeight - kBottom, kTop);
        s += "<text x=\"" + num(px) + "\" y=\"" + num(kHeight - kBottom + 18) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
             num(fx) + "</text>\n";
        s += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(fy) +
             "</text>\n";
    }
    s += "<text x=\"" + num((kLeft + kWidth - kRight) / 2) + "\" y=\"" + num(kHeight - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         esc(x_label) + "</text>\n";
    s += "<text x=\"16\" y=\"" + num((kTop + kHeight - kBottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 16 " +
         num((kTop + kHeight - kBottom) / 2) + ")\">" + esc(y_label) + "</text>\n";
}

}  // namespace

void save_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write to '" + path + "' failed");
}

std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) {
    auto field = [](const std::string& f) {
        if (f.find_first_of(",\"\n") == std::string::npos) return f;
        std::string quoted = "\"";
        for (char c : f) {
            if (c == '"') quoted += '"';
            quoted += c;
        }
        return quoted + "\"";
    };
    std::string out;
    for (size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += field(header[i]);
    }
    out += '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size()) throw Error("to_csv: ragged row");
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += field(row[i]);
        }
        out += '\n';
    }
    return out;
}

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
    Range xr{1e300, -1e300}, yr{1e300, -1e300};
    bool any = false;
    for (const auto& s : series)
        for (const auto& p : s.points) {
            if (!std::isfinite(p[1])) continue;
            xr.expand(p[0]);
            yr.expand(p[1]);
            any = true;
        }
    if (!any) {
        xr = {0, 1};
        yr = {0, 1};
    }
    xr.pad();
    yr.pad();

    std::string s = svg_open(title);
    axes(s, xr, yr, x_label, y_label);
    for (size_t k = 0; k < series.size(); ++k) {
        const char* color = kPalette[k % kPaletteSize];
        std::string path;
        bool pen_down = false;
        for (const auto& p : series[k].points) {
            if (!std::isfinite(p[1])) {
                pen_down = false;
                continue;
            }
            path += pen_down ? "L" : "M";
            path += num(xr.map(p[0], kLeft, kWidth - kRight)) + " " +
                    num(yr.map(p[1], kHeight - kBottom, kTop)) + " ";
            pen_down = true;
        }
        if (!path.empty())
            s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color +
                 "\" stroke-width=\"1.5\"/>\n";
        s += "<text x=\"" + num(kWidth - kRight - 6) + "\" y=\"" + num(kTop + 14.0 * (k + 1)) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" +
             color + "\">" + esc(series[k].name) + "</text>\n";
    }
    return s + "</svg>\n";
}

std::string svg_scatter(const std::string& title, const std::vector<ScatterPoint>& points) {
    Range xr{1e300, -1e300}, yr{1e300, -1e300};
    for (const auto& p : points) {
        xr.expand(p.x);
        yr.expand(p.y);
    }
    if (points.empty()) {
        xr = {0, 1};
        yr = {0, 1};
    }
    xr.pad();
    yr.pad();
    std::string s = svg_open(title);
    axes(s, xr, yr, "", "");
    for (const auto& p : points) {
        double px = xr.map(p.x, kLeft, kWidth - kRight);
        double py = yr.map(p.y, kHeight - kBottom, kTop);
        const char* color = kPalette[p.group % kPaletteSize];
        s += "<circle cx=\"" + num(px) + "\" cy=\"" + num(py) + "\" r=\"4\" fill=\"" + color +
             "\"/>\n";
        if (!p.label.empty())
            s += "<text x=\"" + num(px + 6) + "\" y=\"" + num(py - 5) +
                 "\" font-family=\"sans-serif\" font-size=\"10\">" + esc(p.label) + "</text>\n";
    }
    return s + "</svg>\n";
}

std::string svg_heatmap(const std::string& title, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels,
                        const std::vector<std::vector<double>>& values) {
    size_t rows = values.size();
    size_t cols = rows ? values[0].size() : 0;
    if (row_labels.size() != rows || (rows && col_labels.size() != cols))
        throw Error("svg_heatmap: label counts do not match matrix");
    double vmax = 0.0;
    for (const auto& row : values) {
        if (row.size() != cols) throw Error("svg_heatmap: ragged matrix");
        for (double v : row) vmax = std::max(vmax, std::abs(v));
    }
    if (vmax == 0.0) vmax = 1.0;

    std::string s = svg_open(title);
    double cw = (kWidth - kLeft - kRight) / std::max<size_t>(cols, 1);
    double ch = (kHeight - kTop - kBottom) / std::max<size_t>(rows, 1);
    for (size_t i = 0; i < rows; ++i) {
        for (size_t j = 0; j < cols; ++j) {
            double f = std::abs(values[i][j]) / vmax;
            int light = static_cast<int>(std::lround(255.0 * (1.0 - 0.85 * f)));
            char color[8];
            std::snprintf(color, sizeof(color), "#%02x%02xff", light, light);
            double x = kLeft + cw * j, y = kTop + ch * i;
            s += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cw) +
                 "\" height=\"" + num(ch) + "\" fill=\"" + color +
                 "\" stroke=\"#cccccc\"/>\n";
            s += "<text x=\"" + num(x + cw / 2) + "\" y=\"" + num(y + ch / 2 + 4) +
                 "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
                 num(values[i][j]) + "</text>\n";
        }
        s += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(kTop + ch * i + ch / 2 + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
             esc(row_labels[i]) + "</text>\n";
    }
    for (size_t j = 0; j < cols; ++j)
        s += "<text x=\"" + num(kLeft + cw * j + cw / 2) + "\" y=\"" + num(kTop - 6) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
             esc(col_labels[j]) + "</text>\n";
    return s + "</svg>\n";
}

std::string svg_bars(const std::string& title, const std::vector<std::string>& labels,
                     const std::vector<double>& values) {
    if (labels.size() != values.size()) throw Error("svg_bars: label count mismatch");
    Range yr{0.0, 0.0};
    for (double v : values) yr.expand(v);
    yr.pad();
    std::string s = svg_open(title);
    double zero_y = yr.map(0.0, kHeight - kBottom, kTop);
    double bw = (kWidth - kLeft - kRight) / std::max<size_t>(values.size(), 1);
    for (size_t i = 0; i < values.size(); ++i) {
        double vy = yr.map(values[i], kHeight - kBottom, kTop);
        double x = kLeft + bw * i + bw * 0.15;
        double y0 = std::min(zero_y, vy), h = std::abs(zero_y - vy);
        const char* color = values[i] >= 0 ? kPalette[0] : kPalette[1];
        s += "<rect x=\"" + num(x) + "\" y=\"" + num(y0) + "\" width=\"" + num(bw * 0.7) +
             "\" height=\"" + num(h) + "\" fill=\"" + color + "\"/>\n";
        s += "<text x=\"" + num(kLeft + bw * i + bw / 2) + "\" y=\"" +
             num(kHeight - kBottom + 16) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
             esc(labels[i]) + "</text>\n";
    }
    s += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(zero_y) + "\" x2=\"" +
         num(kWidth - kRight) + "\" y2=\"" + num(zero_y) + "\" stroke=\"black\"/>\n";
    return s + "</svg>\n";
}

}  // namespace geoadapt::plots
