#include "nuc/ssl.hpp"

#include <cmath>
#include <iostream>

namespace nuc::ssl {

ProxyKind proxy_kind_from_string(const std::string& s) {
    if (s == "similarity") return ProxyKind::similarity;
    if (s == "rotation") return ProxyKind::rotation;
    if (s == "contrastive") return ProxyKind::contrastive;
    if (s == "mean_pixel") return ProxyKind::mean_pixel;
    if (s == "imagenet_pretrained") return ProxyKind::imagenet_pretrained;
    throw std::invalid_argument("unknown proxy task: " + s);
}

std::string to_string(ProxyKind k) {
    switch (k) {
        case ProxyKind::similarity: return "similarity";
        case ProxyKind::rotation: return "rotation";
        case ProxyKind::contrastive: return "contrastive";
        case ProxyKind::mean_pixel: return "mean_pixel";
        case ProxyKind::imagenet_pretrained: return "imagenet_pretrained";
    }
    return "?";
}

// ---- augmentation -----------------------------------------------------------

namespace {

RasterImage gaussian_blur(const RasterImage& img, double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = static_cast<float>(std::exp(-0.5 * (i * i) / (sigma * sigma)));
        sum += kernel[i + radius];
    }
    for (float& k : kernel) k = static_cast<float>(k / sum);

    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
        return i;
    };
    RasterImage tmp(img.height, img.width, img.channels);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < img.channels; ++ch) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * img.at(r, reflect(c + i, img.width), ch);
                tmp.at(r, c, ch) = acc;
            }
    RasterImage out(img.height, img.width, img.channels);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < img.channels; ++ch) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * tmp.at(reflect(r + i, img.height), c, ch);
                out.at(r, c, ch) = acc;
            }
    return out;
}

uint32_t mix_seed(uint32_t a, uint32_t b) {
    uint32_t h = a * 2654435761u + b + 0x9e3779b9u;
    h ^= h >> 16;
    h *= 0x85ebca6bu;
    h ^= h >> 13;
    return h;
}

}  // namespace

RasterImage augment_view(const RasterImage& image, const AugmentConfig& cfg, uint32_t seed) {
    if (cfg.is_identity()) return image;
    Rng rng(seed);
    RasterImage out = image;

    if (cfg.hflip && rng.uniform() < 0.5) {
        RasterImage flipped(out.height, out.width, out.channels);
        for (int r = 0; r < out.height; ++r)
            for (int c = 0; c < out.width; ++c)
                for (int ch = 0; ch < out.channels; ++ch)
                    flipped.at(r, out.width - 1 - c, ch) = out.at(r, c, ch);
        out = std::move(flipped);
    }
    if (cfg.vflip && rng.uniform() < 0.5) {
        RasterImage flipped(out.height, out.width, out.channels);
        for (int r = 0; r < out.height; ++r)
            for (int c = 0; c < out.width; ++c)
                for (int ch = 0; ch < out.channels; ++ch)
                    flipped.at(out.height - 1 - r, c, ch) = out.at(r, c, ch);
        out = std::move(flipped);
    }
    if (cfg.brightness > 0.f) {
        float delta = static_cast<float>(rng.uniform(-cfg.brightness, cfg.brightness));
        for (float& v : out.pixels) v += delta;
    }
    if (cfg.contrast > 0.f) {
        float factor = static_cast<float>(rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast));
        double mean = 0.0;
        for (float v : out.pixels) mean += v;
        mean /= static_cast<double>(out.size());
        for (float& v : out.pixels) v = static_cast<float>((v - mean) * factor + mean);
    }
    if (cfg.blur_sigma_max > 0.f) {
        double sigma = rng.uniform(0.0, cfg.blur_sigma_max);
        if (sigma >= 0.05) out = gaussian_blur(out, sigma);
    }
    for (float& v : out.pixels) v = std::min(1.f, std::max(0.f, v));
    return out;
}

// ---- losses -------------------------------------------------------------------

double similarity_loss(const std::vector<float>& z_l, const std::vector<float>& z_r) {
    if (z_l.size() != z_r.size() || z_l.empty())
        throw std::invalid_argument("similarity_loss: embedding length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < z_l.size(); ++i) acc += std::abs(double(z_l[i]) - double(z_r[i]));
    return acc / static_cast<double>(z_l.size());
}

std::pair<RasterImage, int> rotation_label(const RasterImage& image, uint32_t seed) {
    if (image.height != image.width)
        throw std::invalid_argument("rotation_label: square patch required");
    Rng rng(seed);
    int label = static_cast<int>(rng.next_u32() % 4);
    return {rot90(image, label), label};
}

double contrastive_loss(const std::vector<float>& anchor, const std::vector<float>& positive,
                        const std::vector<std::vector<float>>& negatives, double temperature) {
    if (negatives.empty()) throw std::invalid_argument("contrastive_loss: no negatives");
    if (temperature <= 0.0) throw std::invalid_argument("contrastive_loss: temperature must be > 0");
    auto cosine = [&](const std::vector<float>& a, const std::vector<float>& b) {
        if (a.size() != b.size() || a.empty())
            throw std::invalid_argument("contrastive_loss: embedding length mismatch");
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            dot += double(a[i]) * b[i];
            na += double(a[i]) * a[i];
            nb += double(b[i]) * b[i];
        }
        return dot / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
    };
    const double s_pos = cosine(anchor, positive) / temperature;
    double max_s = s_pos;
    std::vector<double> s_neg(negatives.size());
    for (size_t i = 0; i < negatives.size(); ++i) {
        s_neg[i] = cosine(anchor, negatives[i]) / temperature;
        max_s = std::max(max_s, s_neg[i]);
    }
    double denom = std::exp(s_pos - max_s);
    for (double s : s_neg) denom += std::exp(s - max_s);
    return -(s_pos - max_s) + std::log(denom);
}

double mean_pixel_target(const RasterImage& image) {
    double acc = 0.0;
    for (float v : image.pixels) acc += v;
    return acc / static_cast<double>(image.size());
}

// ---- training ------------------------------------------------------------------

namespace {

void zero_grads(std::vector<nn::Param*>& params) {
    for (auto* p : params) p->zero_grad();
}

// mean |z_l - z_r| over pairs plus optional hinge on per-dimension batch std.
// Fills d_emb. Rows [0, pairs) are left views, [pairs, 2*pairs) right views.
double similarity_objective(const nn::Tensor& emb, int pairs, float variance_reg,
                            nn::Tensor& d_emb) {
    const int dim = emb.c;
    d_emb = nn::Tensor(emb.n, dim, 1, 1);
    double loss = 0.0;
    const double scale = 1.0 / (static_cast<double>(pairs) * dim);
    for (int p = 0; p < pairs; ++p)
        for (int d = 0; d < dim; ++d) {
            const float l = emb.at(p, d, 0, 0);
            const float r = emb.at(p + pairs, d, 0, 0);
            const double diff = double(l) - double(r);
            loss += std::abs(diff) * scale;
            const float s = diff > 0.f ? 1.f : (diff < 0.f ? -1.f : 0.f);
            d_emb.at(p, d, 0, 0) += static_cast<float>(s * scale);
            d_emb.at(p + pairs, d, 0, 0) -= static_cast<float>(s * scale);
        }

    if (variance_reg > 0.f) {
        const int m = emb.n;
        for (int d = 0; d < dim; ++d) {
            double mean = 0.0;
            for (int i = 0; i < m; ++i) mean += emb.at(i, d, 0, 0);
            mean /= m;
            double var = 0.0;
            for (int i = 0; i < m; ++i) {
                double c = emb.at(i, d, 0, 0) - mean;
                var += c * c;
            }
            var /= m;
            const double std_d = std::sqrt(var + 1e-8);
            if (std_d < 1.0) {
                loss += variance_reg * (1.0 - std_d) / dim;
                const double g = -double(variance_reg) / (dim * m * std_d);
                for (int i = 0; i < m; ++i)
                    d_emb.at(i, d, 0, 0) += static_cast<float>(g * (emb.at(i, d, 0, 0) - mean));
            }
        }
    }
    return loss;
}

// NT-Xent over a batch of 2*pairs views; view i pairs with i+pairs (mod 2*pairs).
double ntxent_objective(const nn::Tensor& emb, int pairs, double temperature,
                        nn::Tensor& d_emb) {
    const int m = emb.n;
    const int dim = emb.c;
    // normalize
    std::vector<std::vector<double>> u(m, std::vector<double>(dim));
    std::vector<double> norms(m);
    for (int i = 0; i < m; ++i) {
        double nsq = 0.0;
        for (int d = 0; d < dim; ++d) {
            u[i][d] = emb.at(i, d, 0, 0);
            nsq += u[i][d] * u[i][d];
        }
        norms[i] = std::sqrt(nsq) + 1e-12;
        for (int d = 0; d < dim; ++d) u[i][d] /= norms[i];
    }
    auto dot = [&](int i, int j) {
        double s = 0.0;
        for (int d = 0; d < dim; ++d) s += u[i][d] * u[j][d];
        return s;
    };

    std::vector<std::vector<double>> du(m, std::vector<double>(dim, 0.0));
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        const int pos = (i + pairs) % m;
        double max_s = -1e30;
        std::vector<double> s(m, 0.0);
        for (int j = 0; j < m; ++j) {
            if (j == i) continue;
            s[j] = dot(i, j) / temperature;
            max_s = std::max(max_s, s[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < m; ++j)
            if (j != i) denom += std::exp(s[j] - max_s);
        loss += (-(s[pos] - max_s) + std::log(denom)) / m;
        for (int j = 0; j < m; ++j) {
            if (j == i) continue;
            const double p = std::exp(s[j] - max_s) / denom;
            const double g = (p - (j == pos ? 1.0 : 0.0)) / (m * temperature);
            for (int d = 0; d < dim; ++d) {
                du[i][d] += g * u[j][d];
                du[j][d] += g * u[i][d];
            }
        }
    }
    // chain through the normalization u = z/|z|
    d_emb = nn::Tensor(m, dim, 1, 1);
    for (int i = 0; i < m; ++i) {
        double udotg = 0.0;
        for (int d = 0; d < dim; ++d) udotg += u[i][d] * du[i][d];
        for (int d = 0; d < dim; ++d)
            d_emb.at(i, d, 0, 0) = static_cast<float>((du[i][d] - u[i][d] * udotg) / norms[i]);
    }
    return loss;
}

double softmax_ce(const nn::Tensor& logits, const std::vector<int>& labels, nn::Tensor& d) {
    const int m = logits.n, k = logits.c;
    d = nn::Tensor(m, k, 1, 1);
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        double mx = -1e30;
        for (int j = 0; j < k; ++j) mx = std::max(mx, double(logits.at(i, j, 0, 0)));
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(logits.at(i, j, 0, 0) - mx);
        loss += (-(logits.at(i, labels[i], 0, 0) - mx) + std::log(denom)) / m;
        for (int j = 0; j < k; ++j) {
            double p = std::exp(logits.at(i, j, 0, 0) - mx) / denom;
            d.at(i, j, 0, 0) = static_cast<float>((p - (j == labels[i] ? 1.0 : 0.0)) / m);
        }
    }
    return loss;
}

}  // namespace

double similarity_step(nn::Encoder& enc, const nn::Tensor& batch_pairs, float variance_reg,
                       bool train_mode) {
    auto f = enc.forward(batch_pairs, train_mode);
    nn::Tensor d_emb;
    double loss = similarity_objective(f.embedding, batch_pairs.n / 2, variance_reg, d_emb);
    enc.backward(d_emb);
    return loss;
}

nn::Checkpoint pretrain(const std::vector<RasterImage>& dataset, const ProxyTask& task,
                        const nn::EncoderConfig& encoder_cfg, const PretrainConfig& cfg,
                        const std::string& config_hash) {
    if (dataset.empty()) throw std::invalid_argument("pretrain: empty dataset");
    if (cfg.epochs < 0 || cfg.learning_rate <= 0 || cfg.batch_size < 1)
        throw std::invalid_argument("pretrain: bad config");

    if (task.kind == ProxyKind::imagenet_pretrained) {
        if (task.pretrained_path.empty())
            throw std::invalid_argument(
                "imagenet_pretrained requires externally supplied encoder weights");
        nn::Checkpoint c = nn::load_checkpoint(task.pretrained_path);
        c.task = to_string(task.kind);
        c.config_hash = config_hash;
        return c;
    }

    nn::Encoder enc(encoder_cfg, cfg.seed);
    Rng aux_rng(mix_seed(cfg.seed, 0x5eedfaceu));
    nn::Linear rot_head, px_head;
    if (task.kind == ProxyKind::rotation) rot_head = nn::Linear(encoder_cfg.embedding_dim, 4, aux_rng);
    if (task.kind == ProxyKind::mean_pixel) px_head = nn::Linear(encoder_cfg.embedding_dim, 1, aux_rng);

    std::vector<nn::Param*> params = enc.params();
    if (task.kind == ProxyKind::rotation) {
        params.push_back(&rot_head.weight);
        params.push_back(&rot_head.bias);
    }
    if (task.kind == ProxyKind::mean_pixel) {
        params.push_back(&px_head.weight);
        params.push_back(&px_head.bias);
    }

    nn::Adam opt;
    opt.lr = cfg.learning_rate;
    Rng order_rng(mix_seed(cfg.seed, 0xa11ce));

    std::vector<double> losses;
    nn::Checkpoint last_good =
        nn::Checkpoint::from_encoder(enc, to_string(task.kind), config_hash, cfg.seed, losses);

    std::vector<int> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batch_count = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            const int b = static_cast<int>(end - start);
            if ((task.kind == ProxyKind::contrastive || task.kind == ProxyKind::similarity) && b < 1)
                continue;
            if (task.kind == ProxyKind::contrastive && b < 2) continue;  // needs in-batch negatives

            double loss = 0.0;
            nn::Tensor d_emb;
            zero_grads(params);

            if (task.kind == ProxyKind::similarity || task.kind == ProxyKind::contrastive) {
                std::vector<RasterImage> views;
                views.reserve(2 * b);
                for (int i = 0; i < b; ++i) views.push_back(dataset[order[start + i]]);
                for (int i = 0; i < b; ++i)
                    views.push_back(augment_view(dataset[order[start + i]], task.augment,
                                                 mix_seed(cfg.seed, static_cast<uint32_t>(
                                                     epoch * 1000003 + order[start + i]))));
                std::vector<const RasterImage*> ptrs;
                for (auto& v : views) ptrs.push_back(&v);
                auto f = enc.forward(nn::stack_images(ptrs), true);
                if (task.kind == ProxyKind::similarity)
                    loss = similarity_objective(f.embedding, b, task.variance_reg, d_emb);
                else
                    loss = ntxent_objective(f.embedding, b, task.temperature, d_emb);
                enc.backward(d_emb);
            } else if (task.kind == ProxyKind::rotation) {
                std::vector<RasterImage> views;
                std::vector<int> labels;
                for (int i = 0; i < b; ++i) {
                    auto [img, label] = rotation_label(
                        dataset[order[start + i]],
                        mix_seed(cfg.seed, static_cast<uint32_t>(epoch * 1000003 + order[start + i])));
                    views.push_back(std::move(img));
                    labels.push_back(label);
                }
                std::vector<const RasterImage*> ptrs;
                for (auto& v : views) ptrs.push_back(&v);
                auto f = enc.forward(nn::stack_images(ptrs), true);
                nn::Tensor logits = rot_head.forward(f.embedding);
                nn::Tensor d_logits;
                loss = softmax_ce(logits, labels, d_logits);
                enc.backward(rot_head.backward(d_logits));
            } else {  // mean_pixel
                std::vector<const RasterImage*> ptrs;
                std::vector<double> targets;
                for (int i = 0; i < b; ++i) {
                    ptrs.push_back(&dataset[order[start + i]]);
                    targets.push_back(mean_pixel_target(dataset[order[start + i]]));
                }
                auto f = enc.forward(nn::stack_images(ptrs), true);
                nn::Tensor pred = px_head.forward(f.embedding);
                nn::Tensor d_pred(b, 1, 1, 1);
                for (int i = 0; i < b; ++i) {
                    const double diff = pred.at(i, 0, 0, 0) - targets[i];
                    loss += diff * diff / b;
                    d_pred.at(i, 0, 0, 0) = static_cast<float>(2.0 * diff / b);
                }
                enc.backward(px_head.backward(d_pred));
            }

            opt.step(params);
            epoch_loss += loss;
            ++batch_count;
        }
        if (batch_count == 0)
            throw std::runtime_error("pretrain: no usable batches (dataset too small for task)");
        epoch_loss /= batch_count;
        if (!std::isfinite(epoch_loss)) {
            std::cerr << "pretrain: non-finite loss at epoch " << epoch
                      << "; aborting and keeping last good checkpoint\n";
            return last_good;
        }
        losses.push_back(epoch_loss);
        last_good =
            nn::Checkpoint::from_encoder(enc, to_string(task.kind), config_hash, cfg.seed, losses);
    }
    return last_good;
}

}  // namespace nuc::ssl
