#pragma once

// Nuclei detection stage: encoder-decoder trained on tri-state pseudo masks,
// probability-map thresholding, local-extremum center detection, and Voronoi
// label rasterization.

#include <string>
#include <vector>

#include "nuc/core.hpp"
#include "nuc/nn.hpp"

namespace nuc::detect {

struct ThresholdConfig {
    float t_fg = 0.6f;
    float t_bg = 0.6f;  // t_bg <= t_fg
};

struct PeakConfig {
    int radius = 5;        // Chebyshev half-width of the search window
    float min_prob = 0.5f; // floor below which no peak is emitted
};

struct SegTrainConfig {
    int epochs = 100;
    double learning_rate = 1e-4;
    int batch_size = 8;
    uint32_t seed = 0;
    std::string backbone = "compact";  // "compact" | "resunet34-analog"
};

// Pixel-level training under tri-state supervision; ignore (-1) pixels are
// excluded from the loss. Rejects masks with zero supervised pixels.
nn::Checkpoint train_ndn(const std::vector<RasterImage>& images,
                         const std::vector<TriStateMask>& pseudo_masks,
                         const SegTrainConfig& cfg, const std::string& config_hash = "");

// Per-pixel foreground probability (sigmoid of the logit map).
ProbabilityMap predict_probability(nn::UNet& net, const RasterImage& image);

// 1 where p > t_fg, 0 where p < t_bg, -1 otherwise.
TriStateMask threshold_trimap(const ProbabilityMap& prob, const ThresholdConfig& cfg);

// Strict local maxima: (m,n) kept iff p(m,n) > p(i,j) for every other (i,j)
// in the window and p(m,n) >= min_prob. Window is clipped at borders.
PointSet local_maxima(const ProbabilityMap& prob, const PeakConfig& cfg);

// Per-pixel nearest-seed index in integer squared-Euclidean arithmetic;
// -1 marks exact distance ties.
std::vector<int32_t> voronoi_cells(const PointSet& points, int height, int width);

// Nearest-seed partition. Equidistant pixels and pixels whose 4-neighborhood
// (self included) spans >= 2 cells are edges (0); dilated seed disks are
// foreground (1); everything else ignore (-1).
TriStateMask voronoi_labels(const PointSet& points, int height, int width,
                            int seed_disk_radius = 2);

// Masked binary cross-entropy used for NDN training; exposed for tests.
// Returns the mean NLL over supervised pixels of the batch and fills
// d_logits when non-null.
double masked_bce_with_logits(const nn::Tensor& logits, const std::vector<const TriStateMask*>& masks,
                              nn::Tensor* d_logits);

}  // namespace nuc::detect
