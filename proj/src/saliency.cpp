#include "nuc/saliency.hpp"

#include <cmath>

namespace nuc::saliency {

ScalarOutput scalar_from_string(const std::string& s) {
    if (s == "embedding_sum") return ScalarOutput::embedding_sum;
    if (s == "embedding_norm") return ScalarOutput::embedding_norm;
    throw std::invalid_argument("unknown scalar output: " + s);
}

std::vector<float> activation_weights(const nn::Tensor& feature_maps,
                                      const nn::Tensor& gradients, int input_size) {
    if (!feature_maps.same_shape(gradients))
        throw std::invalid_argument("activation_weights: gradient shape mismatch");
    if (input_size <= 0) throw std::invalid_argument("activation_weights: bad input size");
    for (float g : gradients.v)
        if (!std::isfinite(g))
            throw std::invalid_argument("activation_weights: non-finite gradient");

    const int k = feature_maps.c;
    const size_t plane = static_cast<size_t>(feature_maps.h) * feature_maps.w;
    std::vector<float> alpha(k, 0.f);
    for (int ch = 0; ch < k; ++ch) {
        double sum = 0.0;
        const float* g = &gradients.v[static_cast<size_t>(ch) * plane];
        for (size_t i = 0; i < plane; ++i) sum += g[i];
        alpha[ch] = static_cast<float>(sum / input_size);
    }
    return alpha;
}

std::vector<float> upsample_bilinear(const std::vector<float>& src, int h, int w,
                                     int new_h, int new_w) {
    std::vector<float> out(static_cast<size_t>(new_h) * new_w);
    const double sr = new_h > 1 ? double(h - 1) / (new_h - 1) : 0.0;
    const double sc = new_w > 1 ? double(w - 1) / (new_w - 1) : 0.0;
    for (int r = 0; r < new_h; ++r) {
        const double fr = r * sr;
        const int r0 = static_cast<int>(fr);
        const int r1 = std::min(r0 + 1, h - 1);
        const double wr = fr - r0;
        for (int c = 0; c < new_w; ++c) {
            const double fc = c * sc;
            const int c0 = static_cast<int>(fc);
            const int c1 = std::min(c0 + 1, w - 1);
            const double wc = fc - c0;
            const double top = (1.0 - wc) * src[static_cast<size_t>(r0) * w + c0] +
                               wc * src[static_cast<size_t>(r0) * w + c1];
            const double bot = (1.0 - wc) * src[static_cast<size_t>(r1) * w + c0] +
                               wc * src[static_cast<size_t>(r1) * w + c1];
            out[static_cast<size_t>(r) * new_w + c] = static_cast<float>((1.0 - wr) * top + wr * bot);
        }
    }
    return out;
}

ActivationMap self_activation_map(nn::Encoder& encoder, const RasterImage& image,
                                  const LayerSelector& layer, ScalarOutput scalar) {
    if (layer.block_index < 1 || layer.block_index > encoder.block_count())
        throw std::invalid_argument("self_activation_map: layer out of range");

    auto fwd = encoder.forward(nn::image_to_tensor(image), false);
    const nn::Tensor& emb = fwd.embedding;

    // seed gradient of the chosen scalar z with respect to the embedding
    nn::Tensor d_emb(emb.n, emb.c, 1, 1);
    if (scalar == ScalarOutput::embedding_sum) {
        for (float& v : d_emb.v) v = 1.f;
    } else {
        double nsq = 0.0;
        for (float v : emb.v) nsq += double(v) * v;
        const double norm = std::sqrt(nsq) + 1e-12;
        for (size_t i = 0; i < emb.size(); ++i)
            d_emb.v[i] = static_cast<float>(emb.v[i] / norm);
    }

    nn::Tensor grad = encoder.backward(d_emb, layer.block_index);
    const nn::Tensor& feats = fwd.block_out[layer.block_index - 1];
    const int fh = feats.h, fw = feats.w;

    std::vector<float> alpha = activation_weights(feats, grad, fh * fw);

    std::vector<float> raw(static_cast<size_t>(fh) * fw, 0.f);
    const size_t plane = static_cast<size_t>(fh) * fw;
    for (int ch = 0; ch < feats.c; ++ch) {
        const float a = alpha[ch];
        const float* f = &feats.v[static_cast<size_t>(ch) * plane];
        for (size_t i = 0; i < plane; ++i) raw[i] += a * f[i];
    }
    for (float& v : raw) v = std::max(0.f, v);  // ReLU

    ActivationMap map;
    map.height = image.height;
    map.width = image.width;
    map.values = (fh == image.height && fw == image.width)
                     ? raw
                     : upsample_bilinear(raw, fh, fw, image.height, image.width);

    float lo = map.values[0], hi = map.values[0];
    for (float v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    map.normalized_values.resize(map.values.size());
    const float range = hi - lo;
    for (size_t i = 0; i < map.values.size(); ++i)
        map.normalized_values[i] = range > 0.f ? (map.values[i] - lo) / range : 0.f;
    return map;
}

RasterImage colorize_heatmap(const ActivationMap& map) {
    // Steep ramp (t^0.25): moderate activations already read as warm, which
    // keeps the red-channel ordering decisive after fusion with the raw image.
    RasterImage out(map.height, map.width, 3);
    for (int r = 0; r < map.height; ++r)
        for (int c = 0; c < map.width; ++c) {
            const float t = std::min(1.f, std::max(0.f, map.norm(r, c)));
            const float tg = std::pow(t, 0.25f);
            out.at(r, c, 0) = tg;                              // strictly increasing
            out.at(r, c, 1) = 1.f - std::abs(2.f * tg - 1.f);  // mid-band bump
            out.at(r, c, 2) = 1.f - tg;                        // strictly decreasing
        }
    return out;
}

}  // namespace nuc::saliency
