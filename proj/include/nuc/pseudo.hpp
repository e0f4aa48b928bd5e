#pragma once

// Semantic-guided pseudo-mask generation: fuse the colorized activation map
// with the raw image, cluster pixels with K-Means (K=3), then map clusters to
// {foreground, background, ignore} via the red-channel prior.

#include <string>
#include <vector>

#include "nuc/core.hpp"
#include "nuc/saliency.hpp"

namespace nuc::pseudo {

struct FusionConfig {
    float beta = 2.5f;  // detail enhancement ratio (weight of the raw image)
};

enum class MiddleClusterRule { ignore, background };

struct ClusterResult {
    int height = 0, width = 0;
    int k = 0;
    std::vector<int> assignments;            // per pixel, 0..k-1
    std::vector<std::vector<float>> centroids;
    double inertia = 0.0;                    // sum of squared distances to own centroid
    std::vector<double> inertia_history;     // per Lloyd iteration
};

// Elementwise activation + beta * raw, min-max renormalized to [0,1] with a
// single global scale so cross-channel ordering is preserved.
RasterImage fuse(const RasterImage& activation_color, const RasterImage& raw,
                 const FusionConfig& cfg);

// Lloyd's algorithm over row-major pixel features. Seeded spread-maximizing
// init: first centroid picked by the RNG, the rest by farthest-point. Empty
// clusters are re-seeded at the point farthest from its centroid.
ClusterResult kmeans(const std::vector<std::vector<float>>& features, int k, uint32_t seed,
                     int max_iter = 50, double tol = 1e-4);

// Convenience: cluster an image's pixels on their channel features.
ClusterResult kmeans_image(const RasterImage& image, int k, uint32_t seed, int max_iter = 50,
                           double tol = 1e-4);

// Requires K = 3. Highest mean fused red -> foreground, lowest -> background,
// middle per rule. Red-mean ties break by cluster size (larger leans
// background), then by lower cluster id.
TriStateMask reassign_labels(const ClusterResult& clusters, const RasterImage& fused,
                             MiddleClusterRule rule = MiddleClusterRule::ignore);

struct PseudoMaskConfig {
    FusionConfig fusion;
    saliency::LayerSelector layer;
    saliency::ScalarOutput scalar = saliency::ScalarOutput::embedding_norm;
    MiddleClusterRule middle = MiddleClusterRule::ignore;
    uint32_t kmeans_seed = 0;
    int kmeans_max_iter = 50;
    double kmeans_tol = 1e-4;
    double degenerate_variance = 1e-6;  // below this, emit all-background
};

// Tail of the composition starting from an existing activation map:
// colorize -> fuse -> kmeans(3) -> reassign, with the degenerate guard.
TriStateMask pseudo_mask_from_map(const saliency::ActivationMap& map, const RasterImage& image,
                                  const PseudoMaskConfig& cfg);

// Full composition: activation map -> colorize -> fuse -> kmeans(3) -> reassign.
TriStateMask generate_pseudo_mask(nn::Encoder& encoder, const RasterImage& image,
                                  const PseudoMaskConfig& cfg);

}  // namespace nuc::pseudo
