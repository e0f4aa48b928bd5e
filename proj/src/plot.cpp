#include "nuc/plot.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "nuc/io.hpp"

namespace nuc::plot {

namespace {

// 5x7 glyphs for numeric tick labels
const std::map<char, std::array<uint8_t, 7>> kFont = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x0e, 0x00, 0x00, 0x00}},
    {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
};

void draw_text(RasterImage& img, int row, int col, const std::string& text) {
    for (char ch : text) {
        auto it = kFont.find(ch);
        if (it != kFont.end()) {
            for (int r = 0; r < 7; ++r)
                for (int c = 0; c < 5; ++c)
                    if (it->second[r] & (1 << (4 - c))) {
                        const int rr = row + r, cc = col + c;
                        if (rr >= 0 && rr < img.height && cc >= 0 && cc < img.width)
                            for (int k = 0; k < 3; ++k) img.at(rr, cc, k) = 0.1f;
                    }
        }
        col += 6;
    }
}

void draw_line(RasterImage& img, int r0, int c0, int r1, int c1, const float rgb[3]) {
    const int steps = std::max(std::abs(r1 - r0), std::abs(c1 - c0)) + 1;
    for (int i = 0; i <= steps; ++i) {
        const int r = r0 + (r1 - r0) * i / steps;
        const int c = c0 + (c1 - c0) * i / steps;
        if (r >= 0 && r < img.height && c >= 0 && c < img.width)
            for (int k = 0; k < 3; ++k) img.at(r, c, k) = rgb[k];
    }
}

std::string format_tick(double v) {
    char buf[32];
    if (v != 0.0 && (std::abs(v) < 1e-3 || std::abs(v) >= 1e4))
        std::snprintf(buf, sizeof buf, "%.1e", v);
    else
        std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

}  // namespace

void render_line_chart(const std::filesystem::path& path, const Series& series, int width,
                       int height) {
    if (series.x.size() != series.y.size() || series.x.empty())
        throw std::invalid_argument("render_line_chart: bad series");

    RasterImage img(height, width, 3);
    for (float& v : img.pixels) v = 1.f;  // white background

    const int ml = 70, mr = 20, mt = 20, mb = 45;  // margins
    const int pw = width - ml - mr, ph = height - mt - mb;

    double x_lo = series.x[0], x_hi = series.x[0];
    double y_lo = series.y[0], y_hi = series.y[0];
    for (size_t i = 0; i < series.x.size(); ++i) {
        x_lo = std::min(x_lo, series.x[i]);
        x_hi = std::max(x_hi, series.x[i]);
        y_lo = std::min(y_lo, series.y[i]);
        y_hi = std::max(y_hi, series.y[i]);
    }
    if (x_hi == x_lo) { x_hi += 1.0; x_lo -= 1.0; }
    if (y_hi == y_lo) { y_hi += 0.5; y_lo -= 0.5; }
    const double y_pad = 0.05 * (y_hi - y_lo);
    y_lo -= y_pad;
    y_hi += y_pad;

    auto px = [&](double x) { return ml + static_cast<int>((x - x_lo) / (x_hi - x_lo) * pw); };
    auto py = [&](double y) {
        return mt + ph - static_cast<int>((y - y_lo) / (y_hi - y_lo) * ph);
    };

    const float axis_rgb[3] = {0.25f, 0.25f, 0.25f};
    const float grid_rgb[3] = {0.88f, 0.88f, 0.88f};
    const float line_rgb[3] = {0.82f, 0.16f, 0.16f};
    const float dot_rgb[3] = {0.55f, 0.05f, 0.05f};

    // grid + ticks
    const int n_ticks = 5;
    for (int t = 0; t <= n_ticks; ++t) {
        const double xv = x_lo + (x_hi - x_lo) * t / n_ticks;
        const double yv = y_lo + (y_hi - y_lo) * t / n_ticks;
        draw_line(img, mt, px(xv), mt + ph, px(xv), grid_rgb);
        draw_line(img, py(yv), ml, py(yv), ml + pw, grid_rgb);
        draw_text(img, mt + ph + 8, px(xv) - 12, format_tick(xv));
        draw_text(img, py(yv) - 3, 8, format_tick(yv));
    }
    draw_line(img, mt, ml, mt + ph, ml, axis_rgb);
    draw_line(img, mt + ph, ml, mt + ph, ml + pw, axis_rgb);

    // polyline + point markers
    for (size_t i = 0; i + 1 < series.x.size(); ++i)
        draw_line(img, py(series.y[i]), px(series.x[i]), py(series.y[i + 1]), px(series.x[i + 1]),
                  line_rgb);
    for (size_t i = 0; i < series.x.size(); ++i)
        for (int dr = -2; dr <= 2; ++dr)
            for (int dc = -2; dc <= 2; ++dc) {
                const int r = py(series.y[i]) + dr, c = px(series.x[i]) + dc;
                if (r >= 0 && r < img.height && c >= 0 && c < img.width && dr * dr + dc * dc <= 4)
                    for (int k = 0; k < 3; ++k) img.at(r, c, k) = dot_rgb[k];
            }

    io::write_image(path, img);
}

}  // namespace nuc::plot
