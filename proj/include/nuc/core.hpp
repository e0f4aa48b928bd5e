#pragma once

// Shared raster/geometry types used by every stage of the pipeline.
// All rasters are (row, col) indexed, origin top-left.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nuc {

// H x W x C float image, values in [0,1] once normalized. Channel-interleaved
// storage: pixel (r,c) channel k sits at ((r*width)+c)*channels + k.
struct RasterImage {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> pixels;

    RasterImage() = default;
    RasterImage(int h, int w, int c, float fill = 0.f)
        : height(h), width(w), channels(c),
          pixels(static_cast<size_t>(h) * w * c, fill) {}

    float& at(int r, int c, int k) {
        return pixels[(static_cast<size_t>(r) * width + c) * channels + k];
    }
    float at(int r, int c, int k) const {
        return pixels[(static_cast<size_t>(r) * width + c) * channels + k];
    }
    size_t size() const { return pixels.size(); }
    bool same_shape(const RasterImage& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

// Per-pixel label in {foreground=1, background=0, ignore=-1}.
struct TriStateMask {
    int height = 0;
    int width = 0;
    std::vector<int8_t> labels;

    TriStateMask() = default;
    TriStateMask(int h, int w, int8_t fill = -1)
        : height(h), width(w), labels(static_cast<size_t>(h) * w, fill) {}

    int8_t& at(int r, int c) { return labels[static_cast<size_t>(r) * width + c]; }
    int8_t at(int r, int c) const { return labels[static_cast<size_t>(r) * width + c]; }
};

// Binary H x W mask, 0/1.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> values;

    BinaryMask() = default;
    BinaryMask(int h, int w, uint8_t fill = 0)
        : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

    uint8_t& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    uint8_t at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
};

// H x W non-negative integer raster; 0 = background, k>0 = instance id.
// Ids are contiguous 1..n when produced by connected_components.
struct InstanceMap {
    int height = 0;
    int width = 0;
    std::vector<int32_t> labels;

    InstanceMap() = default;
    InstanceMap(int h, int w)
        : height(h), width(w), labels(static_cast<size_t>(h) * w, 0) {}

    int32_t& at(int r, int c) { return labels[static_cast<size_t>(r) * width + c]; }
    int32_t at(int r, int c) const { return labels[static_cast<size_t>(r) * width + c]; }
    int32_t max_id() const {
        int32_t m = 0;
        for (int32_t v : labels) m = std::max(m, v);
        return m;
    }
};

struct Point {
    int row = 0;
    int col = 0;
    bool operator==(const Point& o) const { return row == o.row && col == o.col; }
};

// List of (row, col) nuclei centroids.
struct PointSet {
    std::vector<Point> points;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// H x W array of floats in [0,1].
struct ProbabilityMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;

    ProbabilityMap() = default;
    ProbabilityMap(int h, int w, float fill = 0.f)
        : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

    float& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    float at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
};

// Deterministic RNG. mt19937 core with hand-rolled transforms so that the
// produced stream does not depend on the standard library implementation.
struct Rng {
    std::mt19937 gen;

    explicit Rng(uint32_t seed = 0) : gen(seed) {}

    uint32_t next_u32() { return gen(); }

    // uniform in [0,1)
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_u32() % static_cast<uint32_t>(hi - lo + 1));
    }

    // standard normal via Box-Muller
    double normal() {
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 1e-12);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates, stream-stable
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_u32() % i;
            std::swap(v[i - 1], v[j]);
        }
    }
};

// Min-max scale each channel into [0,1]; constant channels map to 0.
// Rejects non-finite input.
RasterImage normalize(const RasterImage& image);

// Label maximal connected foreground regions 1..n in row-major first-pixel
// order. connectivity must be 4 or 8.
InstanceMap connected_components(const BinaryMask& mask, int connectivity = 8);

// Rotate counter-clockwise by k*90 degrees. k taken mod 4.
RasterImage rot90(const RasterImage& image, int k);

}  // namespace nuc
