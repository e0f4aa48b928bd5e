#include "nuc/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace nuc::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

// ---- Conv2d --------------------------------------------------------------

namespace {

// Reflect padding (half-sample symmetric). Zero padding turns flat image
// borders into strong fake edges that dominate shallow-layer activation maps.
inline int reflect_idx(int i, int n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - 1 - i;
    return i;
}

void im2col(const Tensor& x, int k, int pad, std::vector<float>& cols) {
    const int oh = x.h + 2 * pad - k + 1;
    const int ow = x.w + 2 * pad - k + 1;
    const size_t ck2 = static_cast<size_t>(x.c) * k * k;
    cols.resize(static_cast<size_t>(x.n) * oh * ow * ck2);
    for (int n = 0; n < x.n; ++n)
        for (int r = 0; r < oh; ++r)
            for (int c = 0; c < ow; ++c) {
                float* dst = &cols[((static_cast<size_t>(n) * oh + r) * ow + c) * ck2];
                for (int ic = 0; ic < x.c; ++ic)
                    for (int ki = 0; ki < k; ++ki) {
                        const int ir = reflect_idx(r + ki - pad, x.h);
                        const float* src = &x.v[((static_cast<size_t>(n) * x.c + ic) * x.h + ir) * x.w];
                        for (int kj = 0; kj < k; ++kj)
                            *dst++ = src[reflect_idx(c + kj - pad, x.w)];
                    }
            }
}

void col2im(const std::vector<float>& cols, int n_img, int c, int h, int w, int k, int pad,
            Tensor& dx) {
    const int oh = h + 2 * pad - k + 1;
    const int ow = w + 2 * pad - k + 1;
    const size_t ck2 = static_cast<size_t>(c) * k * k;
    dx = Tensor(n_img, c, h, w);
    for (int n = 0; n < n_img; ++n)
        for (int r = 0; r < oh; ++r)
            for (int col = 0; col < ow; ++col) {
                const float* src = &cols[((static_cast<size_t>(n) * oh + r) * ow + col) * ck2];
                for (int ic = 0; ic < c; ++ic)
                    for (int ki = 0; ki < k; ++ki) {
                        const int ir = reflect_idx(r + ki - pad, h);
                        float* dst = &dx.v[((static_cast<size_t>(n) * c + ic) * h + ir) * w];
                        for (int kj = 0; kj < k; ++kj) {
                            dst[reflect_idx(col + kj - pad, w)] += *src;
                            ++src;
                        }
                    }
            }
}

}  // namespace

Conv2d::Conv2d(int in, int out, int kernel, int padding, Rng& rng)
    : in_c(in), out_c(out), k(kernel), pad(padding) {
    weight.w = Tensor(out, in, kernel, kernel);
    weight.g = Tensor(out, in, kernel, kernel);
    bias.w = Tensor(out, 1, 1, 1);
    bias.g = Tensor(out, 1, 1, 1);
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in) * kernel * kernel));
    for (float& v : weight.w.v) v = static_cast<float>(rng.normal() * stddev);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.c != in_c) throw std::logic_error("Conv2d: channel mismatch");
    const int oh = x.h + 2 * pad - k + 1;
    const int ow = x.w + 2 * pad - k + 1;
    im2col(x, k, pad, cols_);
    last_n_ = x.n; last_h_ = x.h; last_w_ = x.w;

    const long rows = static_cast<long>(x.n) * oh * ow;
    const long ck2 = static_cast<long>(in_c) * k * k;
    CMapRM colm(cols_.data(), rows, ck2);
    CMapRM wm(weight.w.v.data(), out_c, ck2);
    RowMat y = colm * wm.transpose();  // (rows, out_c)

    Tensor out(x.n, out_c, oh, ow);
    for (int n = 0; n < x.n; ++n)
        for (int oc = 0; oc < out_c; ++oc) {
            const float b = bias.w.v[oc];
            float* dst = &out.v[((static_cast<size_t>(n) * out_c + oc) * oh) * ow];
            for (int i = 0; i < oh * ow; ++i)
                dst[i] = y(static_cast<long>(n) * oh * ow + i, oc) + b;
        }
    return out;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const int oh = dy.h, ow = dy.w;
    const long rows = static_cast<long>(dy.n) * oh * ow;
    const long ck2 = static_cast<long>(in_c) * k * k;

    RowMat dym(rows, out_c);
    for (int n = 0; n < dy.n; ++n)
        for (int oc = 0; oc < out_c; ++oc) {
            const float* src = &dy.v[((static_cast<size_t>(n) * out_c + oc) * oh) * ow];
            for (int i = 0; i < oh * ow; ++i)
                dym(static_cast<long>(n) * oh * ow + i, oc) = src[i];
        }

    CMapRM colm(cols_.data(), rows, ck2);
    MapRM gw(weight.g.v.data(), out_c, ck2);
    gw.noalias() += dym.transpose() * colm;
    for (int oc = 0; oc < out_c; ++oc) bias.g.v[oc] += dym.col(oc).sum();

    CMapRM wm(weight.w.v.data(), out_c, ck2);
    RowMat dcols = dym * wm;  // (rows, ck2)
    std::vector<float> dcols_v(dcols.data(), dcols.data() + dcols.size());
    Tensor dx;
    col2im(dcols_v, last_n_, in_c, last_h_, last_w_, k, pad, dx);
    return dx;
}

// ---- BatchNorm2d -----------------------------------------------------------

BatchNorm2d::BatchNorm2d(int channels) : c(channels) {
    gamma.w = Tensor(c, 1, 1, 1, 1.f);
    gamma.g = Tensor(c, 1, 1, 1);
    beta.w = Tensor(c, 1, 1, 1);
    beta.g = Tensor(c, 1, 1, 1);
    running_mean = Tensor(1, c, 1, 1, 0.f);
    running_var = Tensor(1, c, 1, 1, 1.f);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
    last_train_ = train;
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    const double m = static_cast<double>(x.n) * plane;
    Tensor out(x.n, x.c, x.h, x.w);
    x_hat_ = Tensor(x.n, x.c, x.h, x.w);
    inv_std_.assign(c, 0.f);

    for (int ch = 0; ch < c; ++ch) {
        double mean, var;
        if (train) {
            double sum = 0.0, sq = 0.0;
            for (int n = 0; n < x.n; ++n) {
                const float* src = &x.v[(static_cast<size_t>(n) * c + ch) * plane];
                for (size_t i = 0; i < plane; ++i) { sum += src[i]; sq += double(src[i]) * src[i]; }
            }
            mean = sum / m;
            var = std::max(0.0, sq / m - mean * mean);
            running_mean.v[ch] = static_cast<float>((1.0 - momentum) * running_mean.v[ch] + momentum * mean);
            running_var.v[ch] = static_cast<float>((1.0 - momentum) * running_var.v[ch] + momentum * var);
        } else {
            mean = running_mean.v[ch];
            var = running_var.v[ch];
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_std_[ch] = inv;
        const float g = gamma.w.v[ch], b = beta.w.v[ch], mu = static_cast<float>(mean);
        for (int n = 0; n < x.n; ++n) {
            const float* src = &x.v[(static_cast<size_t>(n) * c + ch) * plane];
            float* xh = &x_hat_.v[(static_cast<size_t>(n) * c + ch) * plane];
            float* dst = &out.v[(static_cast<size_t>(n) * c + ch) * plane];
            for (size_t i = 0; i < plane; ++i) {
                xh[i] = (src[i] - mu) * inv;
                dst[i] = g * xh[i] + b;
            }
        }
    }
    return out;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    const size_t plane = static_cast<size_t>(dy.h) * dy.w;
    const double m = static_cast<double>(dy.n) * plane;
    Tensor dx(dy.n, dy.c, dy.h, dy.w);

    for (int ch = 0; ch < c; ++ch) {
        const float g = gamma.w.v[ch];
        const float inv = inv_std_[ch];
        if (!last_train_) {
            const float scale = g * inv;
            for (int n = 0; n < dy.n; ++n) {
                const float* dsrc = &dy.v[(static_cast<size_t>(n) * c + ch) * plane];
                const float* xh = &x_hat_.v[(static_cast<size_t>(n) * c + ch) * plane];
                float* dst = &dx.v[(static_cast<size_t>(n) * c + ch) * plane];
                double dg = 0.0, db = 0.0;
                for (size_t i = 0; i < plane; ++i) {
                    dst[i] = scale * dsrc[i];
                    dg += double(dsrc[i]) * xh[i];
                    db += dsrc[i];
                }
                gamma.g.v[ch] += static_cast<float>(dg);
                beta.g.v[ch] += static_cast<float>(db);
            }
            continue;
        }
        double dg = 0.0, db = 0.0;
        for (int n = 0; n < dy.n; ++n) {
            const float* dsrc = &dy.v[(static_cast<size_t>(n) * c + ch) * plane];
            const float* xh = &x_hat_.v[(static_cast<size_t>(n) * c + ch) * plane];
            for (size_t i = 0; i < plane; ++i) {
                dg += double(dsrc[i]) * xh[i];
                db += dsrc[i];
            }
        }
        gamma.g.v[ch] += static_cast<float>(dg);
        beta.g.v[ch] += static_cast<float>(db);
        const float scale = g * inv;
        const float k1 = static_cast<float>(db / m);
        const float k2 = static_cast<float>(dg / m);
        for (int n = 0; n < dy.n; ++n) {
            const float* dsrc = &dy.v[(static_cast<size_t>(n) * c + ch) * plane];
            const float* xh = &x_hat_.v[(static_cast<size_t>(n) * c + ch) * plane];
            float* dst = &dx.v[(static_cast<size_t>(n) * c + ch) * plane];
            for (size_t i = 0; i < plane; ++i)
                dst[i] = scale * (dsrc[i] - k1 - xh[i] * k2);
        }
    }
    return dx;
}

// ---- ReLU / pools / linear -------------------------------------------------

Tensor ReLU::forward(const Tensor& x) {
    Tensor out = x;
    mask_.assign(x.size(), 0);
    for (size_t i = 0; i < x.size(); ++i) {
        if (out.v[i] > 0.f) mask_[i] = 1;
        else out.v[i] = 0.f;
    }
    return out;
}

Tensor ReLU::backward(const Tensor& dy) const {
    Tensor dx = dy;
    for (size_t i = 0; i < dx.size(); ++i)
        if (!mask_[i]) dx.v[i] = 0.f;
    return dx;
}

Tensor MaxPool2::forward(const Tensor& x) {
    if (x.h % 2 || x.w % 2) throw std::logic_error("MaxPool2: odd spatial dims");
    in_n_ = x.n; in_c_ = x.c; in_h_ = x.h; in_w_ = x.w;
    const int oh = x.h / 2, ow = x.w / 2;
    Tensor out(x.n, x.c, oh, ow);
    argmax_.assign(out.size(), 0);
    size_t oi = 0;
    for (int n = 0; n < x.n; ++n)
        for (int ch = 0; ch < x.c; ++ch)
            for (int r = 0; r < oh; ++r)
                for (int col = 0; col < ow; ++col, ++oi) {
                    float best = -std::numeric_limits<float>::infinity();
                    int32_t best_idx = 0;
                    for (int dr = 0; dr < 2; ++dr)
                        for (int dc = 0; dc < 2; ++dc) {
                            size_t idx = ((static_cast<size_t>(n) * x.c + ch) * x.h + 2 * r + dr) * x.w + 2 * col + dc;
                            if (x.v[idx] > best) { best = x.v[idx]; best_idx = static_cast<int32_t>(idx); }
                        }
                    out.v[oi] = best;
                    argmax_[oi] = best_idx;
                }
    return out;
}

Tensor MaxPool2::backward(const Tensor& dy) const {
    Tensor dx(in_n_, in_c_, in_h_, in_w_);
    for (size_t i = 0; i < dy.size(); ++i) dx.v[argmax_[i]] += dy.v[i];
    return dx;
}

Tensor UpsampleNearest2::forward(const Tensor& x) const {
    Tensor out(x.n, x.c, x.h * 2, x.w * 2);
    for (int n = 0; n < x.n; ++n)
        for (int ch = 0; ch < x.c; ++ch)
            for (int r = 0; r < out.h; ++r)
                for (int col = 0; col < out.w; ++col)
                    out.at(n, ch, r, col) = x.at(n, ch, r / 2, col / 2);
    return out;
}

Tensor UpsampleNearest2::backward(const Tensor& dy) const {
    Tensor dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (int n = 0; n < dy.n; ++n)
        for (int ch = 0; ch < dy.c; ++ch)
            for (int r = 0; r < dy.h; ++r)
                for (int col = 0; col < dy.w; ++col)
                    dx.at(n, ch, r / 2, col / 2) += dy.at(n, ch, r, col);
    return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
    in_h_ = x.h; in_w_ = x.w;
    Tensor out(x.n, x.c, 1, 1);
    const double scale = 1.0 / (static_cast<double>(x.h) * x.w);
    for (int n = 0; n < x.n; ++n)
        for (int ch = 0; ch < x.c; ++ch) {
            double sum = 0.0;
            const float* src = &x.v[(static_cast<size_t>(n) * x.c + ch) * x.h * x.w];
            for (int i = 0; i < x.h * x.w; ++i) sum += src[i];
            out.at(n, ch, 0, 0) = static_cast<float>(sum * scale);
        }
    return out;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) const {
    Tensor dx(dy.n, dy.c, in_h_, in_w_);
    const float scale = 1.f / (static_cast<float>(in_h_) * in_w_);
    for (int n = 0; n < dy.n; ++n)
        for (int ch = 0; ch < dy.c; ++ch) {
            float g = dy.at(n, ch, 0, 0) * scale;
            float* dst = &dx.v[(static_cast<size_t>(n) * dy.c + ch) * in_h_ * in_w_];
            for (int i = 0; i < in_h_ * in_w_; ++i) dst[i] = g;
        }
    return dx;
}

Linear::Linear(int in, int out, Rng& rng) : in_dim(in), out_dim(out) {
    weight.w = Tensor(out, in, 1, 1);
    weight.g = Tensor(out, in, 1, 1);
    bias.w = Tensor(out, 1, 1, 1);
    bias.g = Tensor(out, 1, 1, 1);
    const double stddev = std::sqrt(2.0 / in);
    for (float& v : weight.w.v) v = static_cast<float>(rng.normal() * stddev);
}

Tensor Linear::forward(const Tensor& x) {
    if (x.c != in_dim || x.h != 1 || x.w != 1) throw std::logic_error("Linear: bad input shape");
    x_cache_ = x;
    Tensor out(x.n, out_dim, 1, 1);
    CMapRM xm(x.v.data(), x.n, in_dim);
    CMapRM wm(weight.w.v.data(), out_dim, in_dim);
    MapRM om(out.v.data(), x.n, out_dim);
    om.noalias() = xm * wm.transpose();
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < out_dim; ++o) out.at(n, o, 0, 0) += bias.w.v[o];
    return out;
}

Tensor Linear::backward(const Tensor& dy) {
    CMapRM dym(dy.v.data(), dy.n, out_dim);
    CMapRM xm(x_cache_.v.data(), x_cache_.n, in_dim);
    MapRM gw(weight.g.v.data(), out_dim, in_dim);
    gw.noalias() += dym.transpose() * xm;
    for (int o = 0; o < out_dim; ++o) bias.g.v[o] += dym.col(o).sum();

    Tensor dx(dy.n, in_dim, 1, 1);
    CMapRM wm(weight.w.v.data(), out_dim, in_dim);
    MapRM dxm(dx.v.data(), dy.n, in_dim);
    dxm.noalias() = dym * wm;
    return dx;
}

// ---- Adam ------------------------------------------------------------------

void Adam::step(std::vector<Param*>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->w.size(), 0.f);
            v_[i].assign(params[i]->w.size(), 0.f);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        for (size_t j = 0; j < p.w.size(); ++j) {
            const double g = p.g.v[j];
            m_[i][j] = static_cast<float>(beta1 * m_[i][j] + (1.0 - beta1) * g);
            v_[i][j] = static_cast<float>(beta2 * v_[i][j] + (1.0 - beta2) * g * g);
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            p.w.v[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

// ---- Encoder ----------------------------------------------------------------

EncoderConfig EncoderConfig::preset(const std::string& name) {
    EncoderConfig cfg;
    if (name == "compact") {
        cfg.widths = {16, 32, 64, 128};
        cfg.embedding_dim = 64;
    } else if (name == "deep") {
        cfg.widths = {64, 128, 256, 512};
        cfg.embedding_dim = 256;
    } else {
        throw std::invalid_argument("unknown encoder preset: " + name);
    }
    return cfg;
}

Tensor EncoderBlock::forward(const Tensor& x, bool train) {
    Tensor t = x;
    for (auto& u : units) t = u.forward(t, train);
    return t;
}

Tensor EncoderBlock::backward(const Tensor& dy) {
    Tensor t = dy;
    for (auto it = units.rbegin(); it != units.rend(); ++it) t = it->backward(t);
    return t;
}

Encoder::Encoder(const EncoderConfig& config, uint32_t seed) : cfg(config) {
    if (cfg.widths.size() < 2)
        throw std::invalid_argument("encoder needs at least 2 blocks");
    Rng rng(seed);
    int in = cfg.in_channels;
    for (int width : cfg.widths) {
        EncoderBlock block;
        int cin = in;
        for (int u = 0; u < cfg.convs_per_block; ++u) {
            block.units.emplace_back(cin, width, rng);
            cin = width;
        }
        blocks.push_back(std::move(block));
        in = width;
    }
    pools.resize(blocks.size() - 1);
    head = Linear(cfg.widths.back(), cfg.embedding_dim, rng);
}

Encoder::Forward Encoder::forward(const Tensor& x, bool train) {
    Forward f;
    Tensor t = x;
    for (size_t b = 0; b < blocks.size(); ++b) {
        t = blocks[b].forward(t, train);
        f.block_out.push_back(t);
        if (b + 1 < blocks.size()) t = pools[b].forward(t);
    }
    f.embedding = head.forward(gap.forward(t));
    return f;
}

Tensor Encoder::backward(const Tensor& d_embedding, int capture_block) {
    Tensor captured;
    Tensor d = gap.backward(head.backward(d_embedding));
    for (int b = static_cast<int>(blocks.size()) - 1; b >= 0; --b) {
        if (capture_block == b + 1) captured = d;
        d = blocks[b].backward(d);
        if (b > 0) d = pools[b - 1].backward(d);
    }
    return captured;
}

Tensor Encoder::forward_from(int block, const Tensor& activation) {
    if (block < 1 || block > block_count())
        throw std::invalid_argument("forward_from: block out of range");
    Tensor t = activation;
    for (size_t b = block; b < blocks.size(); ++b) {
        t = pools[b - 1].forward(t);
        t = blocks[b].forward(t, false);
    }
    return head.forward(gap.forward(t));
}

std::vector<Param*> Encoder::params() {
    std::vector<Param*> out;
    for (auto& block : blocks)
        for (auto& u : block.units) {
            out.push_back(&u.conv.weight);
            out.push_back(&u.conv.bias);
            out.push_back(&u.bn.gamma);
            out.push_back(&u.bn.beta);
        }
    out.push_back(&head.weight);
    out.push_back(&head.bias);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Encoder::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (size_t b = 0; b < blocks.size(); ++b)
        for (size_t u = 0; u < blocks[b].units.size(); ++u) {
            std::string p = "block" + std::to_string(b) + ".unit" + std::to_string(u) + ".";
            auto& unit = blocks[b].units[u];
            out.emplace_back(p + "conv.w", &unit.conv.weight.w);
            out.emplace_back(p + "conv.b", &unit.conv.bias.w);
            out.emplace_back(p + "bn.gamma", &unit.bn.gamma.w);
            out.emplace_back(p + "bn.beta", &unit.bn.beta.w);
            out.emplace_back(p + "bn.rmean", &unit.bn.running_mean);
            out.emplace_back(p + "bn.rvar", &unit.bn.running_var);
        }
    out.emplace_back("head.w", &head.weight.w);
    out.emplace_back("head.b", &head.bias.w);
    return out;
}

// ---- UNet --------------------------------------------------------------------

UNetConfig UNetConfig::preset(const std::string& name) {
    UNetConfig cfg;
    if (name == "compact") {
        cfg.widths = {16, 32, 64};
        cfg.residual = false;
    } else if (name == "resunet34-analog") {
        cfg.widths = {64, 128, 256, 512};
        cfg.residual = true;
    } else {
        throw std::invalid_argument("unknown unet preset: " + name);
    }
    return cfg;
}

Tensor UNetStage::forward(const Tensor& x, bool train) {
    if (residual) x_cache_ = x;
    Tensor t = b.forward(a.forward(x, train), train);
    if (residual) {
        Tensor skip = proj ? proj->forward(x_cache_) : x_cache_;
        for (size_t i = 0; i < t.size(); ++i) t.v[i] += skip.v[i];
    }
    return t;
}

Tensor UNetStage::backward(const Tensor& dy) {
    Tensor dx = a.backward(b.backward(dy));
    if (residual) {
        Tensor dskip = proj ? proj->backward(dy) : dy;
        for (size_t i = 0; i < dx.size(); ++i) dx.v[i] += dskip.v[i];
    }
    return dx;
}

namespace {

UNetStage make_stage(int in, int out, bool residual, Rng& rng) {
    UNetStage s;
    s.a = ConvUnit(in, out, rng);
    s.b = ConvUnit(out, out, rng);
    s.residual = residual;
    if (residual && in != out) s.proj = std::make_unique<Conv2d>(in, out, 1, 0, rng);
    return s;
}

}  // namespace

UNet::UNet(const UNetConfig& config, uint32_t seed) : cfg(config) {
    if (cfg.widths.size() < 2)
        throw std::invalid_argument("unet needs at least 2 levels");
    Rng rng(seed);
    const int levels = static_cast<int>(cfg.widths.size());
    int in = cfg.in_channels;
    for (int i = 0; i < levels; ++i) {
        enc.push_back(make_stage(in, cfg.widths[i], cfg.residual, rng));
        in = cfg.widths[i];
    }
    pools.resize(levels - 1);
    ups.resize(levels - 1);
    for (int i = levels - 2; i >= 0; --i) {
        int cat = cfg.widths[i] + cfg.widths[i + 1];
        dec.push_back(make_stage(cat, cfg.widths[i], cfg.residual, rng));
    }
    head = Conv2d(cfg.widths.front(), 1, 1, 0, rng);
}

Tensor UNet::forward(const Tensor& x, bool train) {
    const int levels = static_cast<int>(enc.size());
    enc_out_.clear();
    Tensor t = x;
    for (int i = 0; i < levels; ++i) {
        t = enc[i].forward(t, train);
        enc_out_.push_back(t);
        if (i + 1 < levels) t = pools[i].forward(t);
    }
    for (int d = 0; d < levels - 1; ++d) {
        int skip_level = levels - 2 - d;
        Tensor up = ups[d].forward(t);
        const Tensor& skip = enc_out_[skip_level];
        Tensor cat(up.n, skip.c + up.c, up.h, up.w);
        for (int n = 0; n < up.n; ++n) {
            size_t plane = static_cast<size_t>(up.h) * up.w;
            std::memcpy(&cat.v[(static_cast<size_t>(n) * cat.c) * plane],
                        &skip.v[(static_cast<size_t>(n) * skip.c) * plane],
                        skip.c * plane * sizeof(float));
            std::memcpy(&cat.v[(static_cast<size_t>(n) * cat.c + skip.c) * plane],
                        &up.v[(static_cast<size_t>(n) * up.c) * plane],
                        up.c * plane * sizeof(float));
        }
        t = dec[d].forward(cat, train);
    }
    return head.forward(t);
}

void UNet::backward(const Tensor& d_logits) {
    const int levels = static_cast<int>(enc.size());
    Tensor d = head.backward(d_logits);
    std::vector<Tensor> d_skip(levels);
    for (int dd = levels - 2; dd >= 0; --dd) {
        int skip_level = levels - 2 - dd;
        Tensor dcat = dec[dd].backward(d);
        const int skip_c = cfg.widths[skip_level];
        const int up_c = dcat.c - skip_c;
        Tensor dskip(dcat.n, skip_c, dcat.h, dcat.w);
        Tensor dup(dcat.n, up_c, dcat.h, dcat.w);
        size_t plane = static_cast<size_t>(dcat.h) * dcat.w;
        for (int n = 0; n < dcat.n; ++n) {
            std::memcpy(&dskip.v[(static_cast<size_t>(n) * skip_c) * plane],
                        &dcat.v[(static_cast<size_t>(n) * dcat.c) * plane],
                        skip_c * plane * sizeof(float));
            std::memcpy(&dup.v[(static_cast<size_t>(n) * up_c) * plane],
                        &dcat.v[(static_cast<size_t>(n) * dcat.c + skip_c) * plane],
                        up_c * plane * sizeof(float));
        }
        d_skip[skip_level] = std::move(dskip);
        d = ups[dd].backward(dup);
    }
    // d now is the gradient at the bottleneck output
    for (int i = levels - 1; i >= 0; --i) {
        if (i < levels - 1) {
            d = pools[i].backward(d);
            for (size_t j = 0; j < d.size(); ++j) d.v[j] += d_skip[i].v[j];
        }
        d = enc[i].backward(d);
    }
}

namespace {

void collect_stage(UNetStage& s, const std::string& prefix, std::vector<Param*>& p,
                   std::vector<std::pair<std::string, Tensor*>>* named) {
    auto unit = [&](ConvUnit& u, const std::string& up) {
        p.push_back(&u.conv.weight);
        p.push_back(&u.conv.bias);
        p.push_back(&u.bn.gamma);
        p.push_back(&u.bn.beta);
        if (named) {
            named->emplace_back(up + "conv.w", &u.conv.weight.w);
            named->emplace_back(up + "conv.b", &u.conv.bias.w);
            named->emplace_back(up + "bn.gamma", &u.bn.gamma.w);
            named->emplace_back(up + "bn.beta", &u.bn.beta.w);
            named->emplace_back(up + "bn.rmean", &u.bn.running_mean);
            named->emplace_back(up + "bn.rvar", &u.bn.running_var);
        }
    };
    unit(s.a, prefix + "a.");
    unit(s.b, prefix + "b.");
    if (s.proj) {
        p.push_back(&s.proj->weight);
        p.push_back(&s.proj->bias);
        if (named) {
            named->emplace_back(prefix + "proj.w", &s.proj->weight.w);
            named->emplace_back(prefix + "proj.b", &s.proj->bias.w);
        }
    }
}

}  // namespace

std::vector<Param*> UNet::params() {
    std::vector<Param*> out;
    for (size_t i = 0; i < enc.size(); ++i) collect_stage(enc[i], "", out, nullptr);
    for (size_t i = 0; i < dec.size(); ++i) collect_stage(dec[i], "", out, nullptr);
    out.push_back(&head.weight);
    out.push_back(&head.bias);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> UNet::named_tensors() {
    std::vector<Param*> dummy;
    std::vector<std::pair<std::string, Tensor*>> named;
    for (size_t i = 0; i < enc.size(); ++i)
        collect_stage(enc[i], "enc" + std::to_string(i) + ".", dummy, &named);
    for (size_t i = 0; i < dec.size(); ++i)
        collect_stage(dec[i], "dec" + std::to_string(i) + ".", dummy, &named);
    named.emplace_back("head.w", &head.weight.w);
    named.emplace_back("head.b", &head.bias.w);
    return named;
}

// ---- checkpoint ----------------------------------------------------------------

Checkpoint Checkpoint::from_encoder(Encoder& enc, const std::string& task,
                                    const std::string& config_hash, uint32_t seed,
                                    const std::vector<double>& losses) {
    Checkpoint c;
    c.kind = "encoder";
    c.task = task;
    c.config_hash = config_hash;
    c.seed = seed;
    c.losses = losses;
    c.encoder_cfg = enc.cfg;
    for (auto& [name, t] : enc.named_tensors()) c.tensors.emplace_back(name, t->v);
    return c;
}

Checkpoint Checkpoint::from_unet(UNet& net, const std::string& task,
                                 const std::string& config_hash, uint32_t seed,
                                 const std::vector<double>& losses) {
    Checkpoint c;
    c.kind = "unet";
    c.task = task;
    c.config_hash = config_hash;
    c.seed = seed;
    c.losses = losses;
    c.unet_cfg = net.cfg;
    for (auto& [name, t] : net.named_tensors()) c.tensors.emplace_back(name, t->v);
    return c;
}

Encoder Checkpoint::to_encoder() const {
    if (kind != "encoder") throw std::runtime_error("checkpoint is not an encoder");
    Encoder enc(encoder_cfg, 0);
    auto named = enc.named_tensors();
    if (named.size() != tensors.size())
        throw std::runtime_error("checkpoint tensor count mismatch");
    for (size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != tensors[i].first || named[i].second->size() != tensors[i].second.size())
            throw std::runtime_error("checkpoint tensor mismatch at " + tensors[i].first);
        named[i].second->v = tensors[i].second;
    }
    return enc;
}

UNet Checkpoint::to_unet() const {
    if (kind != "unet") throw std::runtime_error("checkpoint is not a unet");
    UNet net(unet_cfg, 0);
    auto named = net.named_tensors();
    if (named.size() != tensors.size())
        throw std::runtime_error("checkpoint tensor count mismatch");
    for (size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != tensors[i].first || named[i].second->size() != tensors[i].second.size())
            throw std::runtime_error("checkpoint tensor mismatch at " + tensors[i].first);
        named[i].second->v = tensors[i].second;
    }
    return net;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["format"] = "NUCCKPT1";
    header["kind"] = ckpt.kind;
    header["task"] = ckpt.task;
    header["config_hash"] = ckpt.config_hash;
    header["seed"] = ckpt.seed;
    header["losses"] = ckpt.losses;
    if (ckpt.kind == "encoder") {
        header["encoder"] = {{"widths", ckpt.encoder_cfg.widths},
                             {"convs_per_block", ckpt.encoder_cfg.convs_per_block},
                             {"in_channels", ckpt.encoder_cfg.in_channels},
                             {"embedding_dim", ckpt.encoder_cfg.embedding_dim}};
    } else {
        header["unet"] = {{"widths", ckpt.unet_cfg.widths},
                          {"residual", ckpt.unet_cfg.residual},
                          {"in_channels", ckpt.unet_cfg.in_channels}};
    }
    nlohmann::json tensor_index = nlohmann::json::array();
    size_t offset = 0;
    for (auto& [name, data] : ckpt.tensors) {
        tensor_index.push_back({{"name", name}, {"offset", offset}, {"count", data.size()}});
        offset += data.size();
    }
    header["tensors"] = tensor_index;

    std::string hs = header.dump();
    std::string bytes = "NUCCKPT1";
    uint32_t len = static_cast<uint32_t>(hs.size());
    bytes.append(reinterpret_cast<const char*>(&len), 4);
    bytes += hs;
    for (auto& [name, data] : ckpt.tensors)
        bytes.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));

    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    if (bytes.size() < 12 || bytes.substr(0, 8) != "NUCCKPT1")
        throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t len;
    std::memcpy(&len, bytes.data() + 8, 4);
    nlohmann::json header = nlohmann::json::parse(bytes.substr(12, len));

    Checkpoint c;
    c.kind = header["kind"];
    c.task = header["task"];
    c.config_hash = header["config_hash"];
    c.seed = header["seed"];
    c.losses = header["losses"].get<std::vector<double>>();
    if (c.kind == "encoder") {
        c.encoder_cfg.widths = header["encoder"]["widths"].get<std::vector<int>>();
        c.encoder_cfg.convs_per_block = header["encoder"]["convs_per_block"];
        c.encoder_cfg.in_channels = header["encoder"]["in_channels"];
        c.encoder_cfg.embedding_dim = header["encoder"]["embedding_dim"];
    } else {
        c.unet_cfg.widths = header["unet"]["widths"].get<std::vector<int>>();
        c.unet_cfg.residual = header["unet"]["residual"];
        c.unet_cfg.in_channels = header["unet"]["in_channels"];
    }
    size_t base = 12 + len;
    for (auto& entry : header["tensors"]) {
        size_t offset = entry["offset"];
        size_t count = entry["count"];
        std::vector<float> data(count);
        std::memcpy(data.data(), bytes.data() + base + offset * sizeof(float),
                    count * sizeof(float));
        c.tensors.emplace_back(entry["name"], std::move(data));
    }
    return c;
}

Tensor image_to_tensor(const RasterImage& img) {
    Tensor t(1, img.channels, img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int k = 0; k < img.channels; ++k)
                t.at(0, k, r, c) = img.at(r, c, k);
    return t;
}

Tensor stack_images(const std::vector<const RasterImage*>& imgs) {
    if (imgs.empty()) throw std::invalid_argument("stack_images: empty batch");
    const RasterImage& first = *imgs[0];
    Tensor t(static_cast<int>(imgs.size()), first.channels, first.height, first.width);
    for (size_t n = 0; n < imgs.size(); ++n) {
        if (!imgs[n]->same_shape(first))
            throw std::invalid_argument("stack_images: shape mismatch in batch");
        for (int r = 0; r < first.height; ++r)
            for (int c = 0; c < first.width; ++c)
                for (int k = 0; k < first.channels; ++k)
                    t.at(static_cast<int>(n), k, r, c) = imgs[n]->at(r, c, k);
    }
    return t;
}

}  // namespace nuc::nn
