#pragma once

// Minimal line-chart rendering to PPM files for sweep reports. Tick labels
// use an embedded 5x7 digit font; series names travel in the CSV next to the
// chart, not in the image.

#include <filesystem>
#include <string>
#include <vector>

#include "nuc/core.hpp"

namespace nuc::plot {

struct Series {
    std::vector<double> x;
    std::vector<double> y;
};

// Single-series metric-vs-parameter chart with axes and numeric tick labels.
void render_line_chart(const std::filesystem::path& path, const Series& series,
                       int width = 640, int height = 440);

}  // namespace nuc::plot
