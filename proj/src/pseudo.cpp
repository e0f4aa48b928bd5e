#include "nuc/pseudo.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace nuc::pseudo {

RasterImage fuse(const RasterImage& activation_color, const RasterImage& raw,
                 const FusionConfig& cfg) {
    if (!activation_color.same_shape(raw))
        throw std::invalid_argument("fuse: shape mismatch between activation map and raw image");
    if (!(cfg.beta >= 0.f) || !std::isfinite(cfg.beta))
        throw std::invalid_argument("fuse: beta must be finite and >= 0");

    RasterImage out(raw.height, raw.width, raw.channels);
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (size_t i = 0; i < out.size(); ++i) {
        out.pixels[i] = activation_color.pixels[i] + cfg.beta * raw.pixels[i];
        lo = std::min(lo, out.pixels[i]);
        hi = std::max(hi, out.pixels[i]);
    }
    const float range = hi - lo;
    for (float& v : out.pixels) v = range > 0.f ? (v - lo) / range : 0.f;
    return out;
}

namespace {

double sq_dist(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc;
}

}  // namespace

ClusterResult kmeans(const std::vector<std::vector<float>>& features, int k, uint32_t seed,
                     int max_iter, double tol) {
    const int n = static_cast<int>(features.size());
    if (k < 2) throw std::invalid_argument("kmeans: K must be >= 2");
    if (n < k) throw std::invalid_argument("kmeans: K exceeds point count");
    const size_t dim = features[0].size();

    ClusterResult res;
    res.k = k;
    res.assignments.assign(n, 0);
    res.centroids.assign(k, std::vector<float>(dim, 0.f));

    // spread-maximizing init: seeded first pick, then farthest-point
    Rng rng(seed);
    std::vector<int> centers{static_cast<int>(rng.next_u32() % n)};
    std::vector<double> min_d(n, std::numeric_limits<double>::max());
    while (static_cast<int>(centers.size()) < k) {
        int last = centers.back();
        int far_idx = -1;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
            min_d[i] = std::min(min_d[i], sq_dist(features[i], features[last]));
            if (min_d[i] > far_d) { far_d = min_d[i]; far_idx = i; }
        }
        centers.push_back(far_idx);
    }
    for (int c = 0; c < k; ++c) res.centroids[c] = features[centers[c]];

    std::vector<int> counts(k, 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        // assign
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(features[i], res.centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(features[i], res.centroids[c]);
                if (d < best_d) { best_d = d; best = c; }
            }
            res.assignments[i] = best;
            inertia += best_d;
        }
        res.inertia = inertia;
        res.inertia_history.push_back(inertia);

        // update
        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            ++counts[res.assignments[i]];
            for (size_t d = 0; d < dim; ++d) sums[res.assignments[i]][d] += features[i][d];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) {
            std::vector<float> next(dim);
            if (counts[c] == 0) {
                // re-seed empty cluster at the point farthest from its assigned centroid
                int far_idx = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = sq_dist(features[i], res.centroids[res.assignments[i]]);
                    if (d > far_d) { far_d = d; far_idx = i; }
                }
                next = features[far_idx];
            } else {
                for (size_t d = 0; d < dim; ++d)
                    next[d] = static_cast<float>(sums[c][d] / counts[c]);
            }
            shift += sq_dist(next, res.centroids[c]);
            res.centroids[c] = std::move(next);
        }
        if (shift < tol * tol) break;
    }

    // final assignment + inertia against the converged centroids
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_d = sq_dist(features[i], res.centroids[0]);
        for (int c = 1; c < k; ++c) {
            const double d = sq_dist(features[i], res.centroids[c]);
            if (d < best_d) { best_d = d; best = c; }
        }
        res.assignments[i] = best;
        inertia += best_d;
    }
    res.inertia = inertia;
    res.inertia_history.push_back(inertia);
    return res;
}

ClusterResult kmeans_image(const RasterImage& image, int k, uint32_t seed, int max_iter,
                           double tol) {
    std::vector<std::vector<float>> feats(static_cast<size_t>(image.height) * image.width);
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < image.width; ++c) {
            std::vector<float> f(image.channels);
            for (int ch = 0; ch < image.channels; ++ch) f[ch] = image.at(r, c, ch);
            feats[static_cast<size_t>(r) * image.width + c] = std::move(f);
        }
    ClusterResult res = kmeans(feats, k, seed, max_iter, tol);
    res.height = image.height;
    res.width = image.width;
    return res;
}

TriStateMask reassign_labels(const ClusterResult& clusters, const RasterImage& fused,
                             MiddleClusterRule rule) {
    if (clusters.k != 3) throw std::invalid_argument("reassign_labels: exactly 3 clusters required");
    if (static_cast<size_t>(fused.height) * fused.width != clusters.assignments.size())
        throw std::invalid_argument("reassign_labels: fused image size mismatch");
    if (fused.channels != 3) throw std::invalid_argument("reassign_labels: 3-channel image required");

    double red_sum[3] = {0, 0, 0};
    long count[3] = {0, 0, 0};
    for (int r = 0; r < fused.height; ++r)
        for (int c = 0; c < fused.width; ++c) {
            const int a = clusters.assignments[static_cast<size_t>(r) * fused.width + c];
            red_sum[a] += fused.at(r, c, 0);
            ++count[a];
        }
    double mean_red[3];
    for (int i = 0; i < 3; ++i) mean_red[i] = count[i] ? red_sum[i] / count[i] : 0.0;

    // ascending mean red; ties -> larger cluster first (lands nearer background)
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int a, int b) {
        if (mean_red[a] != mean_red[b]) return mean_red[a] < mean_red[b];
        if (count[a] != count[b]) return count[a] > count[b];
        return a < b;
    });

    int8_t remap[3];
    remap[order[0]] = 0;                                            // background
    remap[order[1]] = rule == MiddleClusterRule::ignore ? -1 : 0;   // middle
    remap[order[2]] = 1;                                            // foreground

    TriStateMask mask(fused.height, fused.width);
    for (size_t i = 0; i < clusters.assignments.size(); ++i)
        mask.labels[i] = remap[clusters.assignments[i]];
    return mask;
}

TriStateMask pseudo_mask_from_map(const saliency::ActivationMap& map, const RasterImage& image,
                                  const PseudoMaskConfig& cfg) {
    RasterImage fused = fuse(saliency::colorize_heatmap(map), image, cfg.fusion);

    // degenerate guard: no structure to segment
    double var_acc = 0.0;
    for (int ch = 0; ch < fused.channels; ++ch) {
        double mean = 0.0, sq = 0.0;
        const size_t n = static_cast<size_t>(fused.height) * fused.width;
        for (int r = 0; r < fused.height; ++r)
            for (int c = 0; c < fused.width; ++c) {
                const double v = fused.at(r, c, ch);
                mean += v;
                sq += v * v;
            }
        mean /= n;
        var_acc += sq / n - mean * mean;
    }
    if (var_acc < cfg.degenerate_variance) return TriStateMask(image.height, image.width, 0);

    ClusterResult clusters =
        kmeans_image(fused, 3, cfg.kmeans_seed, cfg.kmeans_max_iter, cfg.kmeans_tol);
    return reassign_labels(clusters, fused, cfg.middle);
}

TriStateMask generate_pseudo_mask(nn::Encoder& encoder, const RasterImage& image,
                                  const PseudoMaskConfig& cfg) {
    saliency::ActivationMap am =
        saliency::self_activation_map(encoder, image, cfg.layer, cfg.scalar);
    return pseudo_mask_from_map(am, image, cfg);
}

}  // namespace nuc::pseudo
