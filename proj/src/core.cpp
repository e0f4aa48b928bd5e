#include "nuc/core.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace nuc {

RasterImage normalize(const RasterImage& image) {
    if (image.height <= 0 || image.width <= 0 || image.channels <= 0)
        throw std::invalid_argument("normalize: empty image");
    for (float v : image.pixels)
        if (!std::isfinite(v))
            throw std::invalid_argument("normalize: non-finite pixel value");

    RasterImage out(image.height, image.width, image.channels);
    for (int k = 0; k < image.channels; ++k) {
        float lo = std::numeric_limits<float>::max();
        float hi = std::numeric_limits<float>::lowest();
        for (int r = 0; r < image.height; ++r)
            for (int c = 0; c < image.width; ++c) {
                float v = image.at(r, c, k);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        const float range = hi - lo;
        for (int r = 0; r < image.height; ++r)
            for (int c = 0; c < image.width; ++c)
                out.at(r, c, k) = range > 0.f ? (image.at(r, c, k) - lo) / range : 0.f;
    }
    return out;
}

InstanceMap connected_components(const BinaryMask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw std::invalid_argument("connected_components: connectivity must be 4 or 8");

    static const int dr8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static const int dc8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static const int dr4[4] = {-1, 0, 0, 1};
    static const int dc4[4] = {0, -1, 1, 0};
    const int* dr = connectivity == 8 ? dr8 : dr4;
    const int* dc = connectivity == 8 ? dc8 : dc4;
    const int nn = connectivity;

    InstanceMap out(mask.height, mask.width);
    int32_t next_id = 0;
    std::deque<Point> queue;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            if (!mask.at(r, c) || out.at(r, c) != 0) continue;
            ++next_id;
            out.at(r, c) = next_id;
            queue.push_back({r, c});
            while (!queue.empty()) {
                Point p = queue.front();
                queue.pop_front();
                for (int i = 0; i < nn; ++i) {
                    int nr = p.row + dr[i], nc = p.col + dc[i];
                    if (nr < 0 || nr >= mask.height || nc < 0 || nc >= mask.width) continue;
                    if (!mask.at(nr, nc) || out.at(nr, nc) != 0) continue;
                    out.at(nr, nc) = next_id;
                    queue.push_back({nr, nc});
                }
            }
        }
    }
    return out;
}

RasterImage rot90(const RasterImage& image, int k) {
    k = ((k % 4) + 4) % 4;
    if (k == 0) return image;
    RasterImage out;
    if (k == 2) {
        out = RasterImage(image.height, image.width, image.channels);
        for (int r = 0; r < image.height; ++r)
            for (int c = 0; c < image.width; ++c)
                for (int ch = 0; ch < image.channels; ++ch)
                    out.at(image.height - 1 - r, image.width - 1 - c, ch) = image.at(r, c, ch);
        return out;
    }
    out = RasterImage(image.width, image.height, image.channels);
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < image.width; ++c)
            for (int ch = 0; ch < image.channels; ++ch) {
                if (k == 1)  // CCW: column c becomes row (W-1-c)
                    out.at(image.width - 1 - c, r, ch) = image.at(r, c, ch);
                else  // k == 3, CW
                    out.at(c, image.height - 1 - r, ch) = image.at(r, c, ch);
            }
    return out;
}

}  // namespace nuc
