#pragma once

// Minimal CPU training engine: NCHW tensors, conv/batchnorm/pool/linear
// layers with explicit forward/backward, Adam, and two network shapes —
// a block-structured encoder (gradients at any block boundary can be
// captured, which the activation-map stage relies on) and a U-Net style
// encoder-decoder emitting per-pixel logits.
//
// Everything is deterministic: seeded init, fixed iteration order, no
// threading inside ops.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nuc/core.hpp"

namespace nuc::nn {

struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, float fill = 0.f)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

    size_t size() const { return v.size(); }
    float& at(int i, int k, int r, int col) {
        return v[((static_cast<size_t>(i) * c + k) * h + r) * w + col];
    }
    float at(int i, int k, int r, int col) const {
        return v[((static_cast<size_t>(i) * c + k) * h + r) * w + col];
    }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

struct Param {
    Tensor w;
    Tensor g;

    void zero_grad() { std::fill(g.v.begin(), g.v.end(), 0.f); }
};

// ---- layers ------------------------------------------------------------

struct Conv2d {
    int in_c = 0, out_c = 0, k = 3, pad = 1;
    Param weight;  // (out_c, in_c, k, k)
    Param bias;    // (out_c)

    Conv2d() = default;
    Conv2d(int in, int out, int kernel, int padding, Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

private:
    std::vector<float> cols_;  // cached im2col of last input
    int last_n_ = 0, last_h_ = 0, last_w_ = 0;
};

struct BatchNorm2d {
    int c = 0;
    float eps = 1e-5f;
    float momentum = 0.1f;
    Param gamma, beta;
    Tensor running_mean, running_var;  // (1,c,1,1)

    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels);
    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& dy);

private:
    bool last_train_ = false;
    Tensor x_hat_;
    std::vector<float> inv_std_;
};

struct ReLU {
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    std::vector<uint8_t> mask_;
};

struct MaxPool2 {  // kernel 2, stride 2; requires even spatial dims
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    std::vector<int32_t> argmax_;
    int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
};

struct UpsampleNearest2 {
    Tensor forward(const Tensor& x) const;
    Tensor backward(const Tensor& dy) const;
};

struct GlobalAvgPool {  // (n,c,h,w) -> (n,c,1,1)
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    int in_h_ = 0, in_w_ = 0;
};

struct Linear {
    int in_dim = 0, out_dim = 0;
    Param weight;  // (out,in,1,1)
    Param bias;    // (out)

    Linear() = default;
    Linear(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x);  // x: (n,in,1,1) -> (n,out,1,1)
    Tensor backward(const Tensor& dy);

private:
    Tensor x_cache_;
};

// ---- optimizer ----------------------------------------------------------

struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void step(std::vector<Param*>& params);

private:
    long t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

// ---- encoder ------------------------------------------------------------

struct EncoderConfig {
    std::vector<int> widths = {16, 32, 64, 128};
    int convs_per_block = 2;
    int in_channels = 3;
    int embedding_dim = 64;

    static EncoderConfig preset(const std::string& name);  // "compact" | "deep"
};

// conv -> BN -> ReLU
struct ConvUnit {
    Conv2d conv;
    BatchNorm2d bn;
    ReLU relu;

    ConvUnit() = default;
    ConvUnit(int in, int out, Rng& rng) : conv(in, out, 3, 1, rng), bn(out) {}
    Tensor forward(const Tensor& x, bool train) {
        return relu.forward(bn.forward(conv.forward(x), train));
    }
    Tensor backward(const Tensor& dy) {
        return conv.backward(bn.backward(relu.backward(dy)));
    }
};

struct EncoderBlock {
    std::vector<ConvUnit> units;

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& dy);
};

// Block-structured encoder; block b output A^b is the post-ReLU feature
// stack of that block at its own resolution (pooling sits between blocks).
struct Encoder {
    EncoderConfig cfg;
    std::vector<EncoderBlock> blocks;
    std::vector<MaxPool2> pools;  // blocks.size()-1 of them
    GlobalAvgPool gap;
    Linear head;

    Encoder() = default;
    Encoder(const EncoderConfig& cfg, uint32_t seed);

    int block_count() const { return static_cast<int>(blocks.size()); }

    struct Forward {
        std::vector<Tensor> block_out;  // A^1..A^B
        Tensor embedding;               // (n, embedding_dim, 1, 1)
    };
    Forward forward(const Tensor& x, bool train);

    // Backward from embedding gradient. Accumulates parameter gradients and,
    // when capture_block in [1, B], returns dz/dA^capture_block; otherwise an
    // empty tensor. Uses the caches of the most recent forward().
    Tensor backward(const Tensor& d_embedding, int capture_block = 0);

    // Re-run the tail of the network (everything after block `block`) from a
    // given activation, eval mode. Used by finite-difference oracles.
    Tensor forward_from(int block, const Tensor& activation);

    std::vector<Param*> params();
    std::vector<std::pair<std::string, Tensor*>> named_tensors();  // weights + BN stats
};

// ---- U-Net --------------------------------------------------------------

struct UNetConfig {
    std::vector<int> widths = {16, 32, 64};
    bool residual = false;
    int in_channels = 3;

    static UNetConfig preset(const std::string& name);  // "compact" | "resunet34-analog"
};

// Double-conv stage, optionally residual with 1x1 projection.
struct UNetStage {
    ConvUnit a, b;
    bool residual = false;
    std::unique_ptr<Conv2d> proj;  // 1x1, when residual and channels change
    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& dy);

private:
    Tensor x_cache_;
};

struct UNet {
    UNetConfig cfg;
    std::vector<UNetStage> enc;
    std::vector<MaxPool2> pools;
    std::vector<UpsampleNearest2> ups;
    std::vector<UNetStage> dec;
    Conv2d head;  // 1x1 -> 1 logit channel

    UNet() = default;
    UNet(const UNetConfig& cfg, uint32_t seed);

    Tensor forward(const Tensor& x, bool train);  // (n,1,h,w) logits
    void backward(const Tensor& d_logits);

    std::vector<Param*> params();
    std::vector<std::pair<std::string, Tensor*>> named_tensors();

private:
    std::vector<Tensor> enc_out_;
};

// ---- checkpoint container ------------------------------------------------

// Self-describing single-file container: JSON header (topology, proxy task,
// config hash, seed, per-epoch loss log) followed by raw float32 data.
struct Checkpoint {
    std::string kind;  // "encoder" | "unet"
    std::string task;  // proxy task or stage name
    std::string config_hash;
    uint32_t seed = 0;
    std::vector<double> losses;
    EncoderConfig encoder_cfg;
    UNetConfig unet_cfg;
    std::vector<std::pair<std::string, std::vector<float>>> tensors;

    static Checkpoint from_encoder(Encoder& enc, const std::string& task,
                                   const std::string& config_hash, uint32_t seed,
                                   const std::vector<double>& losses);
    static Checkpoint from_unet(UNet& net, const std::string& task,
                                const std::string& config_hash, uint32_t seed,
                                const std::vector<double>& losses);
    Encoder to_encoder() const;
    UNet to_unet() const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Image <-> tensor bridges.
Tensor image_to_tensor(const RasterImage& img);
Tensor stack_images(const std::vector<const RasterImage*>& imgs);

}  // namespace nuc::nn
