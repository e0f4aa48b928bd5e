#pragma once

// Self-activation maps: gradient-weighted, rectified sums of a chosen
// encoder block's feature maps, upsampled to input resolution.

#include <string>
#include <vector>

#include "nuc/core.hpp"
#include "nuc/nn.hpp"

namespace nuc::saliency {

struct LayerSelector {
    int block_index = 1;  // 1-based
};

// Which scalar of the embedding is differentiated. The similarity task has
// no class logit, so the scalar is derived from the embedding itself.
enum class ScalarOutput { embedding_sum, embedding_norm };

ScalarOutput scalar_from_string(const std::string& s);

struct ActivationMap {
    int height = 0;
    int width = 0;
    std::vector<float> values;             // >= 0, ReLU output upsampled
    std::vector<float> normalized_values;  // min-max scaled to [0,1]

    float value(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
    float norm(int r, int c) const {
        return normalized_values[static_cast<size_t>(r) * width + c];
    }
};

// alpha_k = (1/N) * sum_ij gradient[k][i][j]. feature_maps is only used for
// shape validation; both arrays are (K, h, w) single-sample tensors.
std::vector<float> activation_weights(const nn::Tensor& feature_maps,
                                      const nn::Tensor& gradients, int input_size);

// ReLU(sum_k alpha_k A^k) for the selected block, bilinearly upsampled to the
// input resolution and min-max normalized. Deterministic per (encoder, image).
ActivationMap self_activation_map(nn::Encoder& encoder, const RasterImage& image,
                                  const LayerSelector& layer,
                                  ScalarOutput scalar = ScalarOutput::embedding_norm);

// Fixed blue-to-red ramp; red strictly increases and blue strictly decreases
// with activation.
RasterImage colorize_heatmap(const ActivationMap& map);

// Exposed for tests: align-corners bilinear resampling of a single-channel grid.
std::vector<float> upsample_bilinear(const std::vector<float>& src, int h, int w,
                                     int new_h, int new_w);

}  // namespace nuc::saliency
