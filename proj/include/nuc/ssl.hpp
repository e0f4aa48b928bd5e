#pragma once

// Self-supervised pretraining of the block-structured encoder. Proxy tasks:
// similarity discrimination between an image and its augmented view (the
// default), rotation-angle prediction, contrastive discrimination, mean
// pixel value regression, and loading externally pretrained weights.

#include <optional>
#include <string>
#include <vector>

#include "nuc/core.hpp"
#include "nuc/nn.hpp"

namespace nuc::ssl {

enum class ProxyKind { similarity, rotation, contrastive, mean_pixel, imagenet_pretrained };

ProxyKind proxy_kind_from_string(const std::string& s);
std::string to_string(ProxyKind k);

struct AugmentConfig {
    float brightness = 0.2f;   // additive jitter in [-b, b]
    float contrast = 0.2f;     // multiplicative jitter in [1-c, 1+c]
    float blur_sigma_max = 1.0f;
    bool hflip = true;
    bool vflip = true;

    static AugmentConfig identity() { return {0.f, 0.f, 0.f, false, false}; }
    bool is_identity() const {
        return brightness == 0.f && contrast == 0.f && blur_sigma_max == 0.f && !hflip && !vflip;
    }
};

struct ProxyTask {
    ProxyKind kind = ProxyKind::similarity;
    float temperature = 0.5f;        // contrastive only
    float variance_reg = 1e-4f;      // similarity collapse mitigation; 0 disables
    AugmentConfig augment;
    std::string pretrained_path;     // imagenet_pretrained only
};

struct PretrainConfig {
    int epochs = 100;
    double learning_rate = 1e-4;
    int batch_size = 8;
    uint32_t seed = 0;
};

// Stochastic photometric + mild geometric transform; deterministic per seed,
// output shape equals input shape.
RasterImage augment_view(const RasterImage& image, const AugmentConfig& cfg, uint32_t seed);

// Eq.-style pairwise distance: mean absolute difference of the embeddings.
double similarity_loss(const std::vector<float>& z_l, const std::vector<float>& z_r);

// Random 90-degree rotation with its class label in {0,1,2,3}; square input only.
std::pair<RasterImage, int> rotation_label(const RasterImage& image, uint32_t seed);

// Normalized-temperature cross entropy over cosine similarities.
double contrastive_loss(const std::vector<float>& anchor, const std::vector<float>& positive,
                        const std::vector<std::vector<float>>& negatives, double temperature);

// Mean over all pixels and channels.
double mean_pixel_target(const RasterImage& image);

// Full pretraining loop. Returns the checkpoint with per-epoch loss log.
// epochs == 0 yields the untouched initialization.
nn::Checkpoint pretrain(const std::vector<RasterImage>& dataset, const ProxyTask& task,
                        const nn::EncoderConfig& encoder_cfg, const PretrainConfig& cfg,
                        const std::string& config_hash = "");

// Exposed for tests: one similarity forward/backward on a batch of (left,
// right) pairs; returns the loss and leaves parameter gradients accumulated.
double similarity_step(nn::Encoder& enc, const nn::Tensor& batch_pairs, float variance_reg,
                       bool train_mode = true);

}  // namespace nuc::ssl
