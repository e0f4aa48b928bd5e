#include "nuc/segment.hpp"

#include <cmath>
#include <iostream>

namespace nuc::segment {

JointLossValue joint_loss(const ProbabilityMap& pred, const TriStateMask& vor,
                          const TriStateMask& trimap, const JointLossConfig& cfg) {
    if (pred.height != vor.height || pred.width != vor.width ||
        pred.height != trimap.height || pred.width != trimap.width)
        throw std::invalid_argument("joint_loss: shape mismatch");
    if (!(cfg.lambda_ > 0.0) || !std::isfinite(cfg.lambda_))
        throw std::invalid_argument("joint_loss: lambda must be finite and > 0");

    const double eps = cfg.clamp_eps;
    double vor_sum = 0.0, bg_sum = 0.0;
    long n_vor = 0, n_bg = 0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const double p = std::min(1.0 - eps, std::max(eps, double(pred.values[i])));
        if (vor.labels[i] != -1) {
            const double y = vor.labels[i];
            vor_sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
            ++n_vor;
        }
        if (trimap.labels[i] == 0) {
            bg_sum += -std::log(1.0 - p);
            ++n_bg;
        }
    }
    if (n_vor == 0 && n_bg == 0)
        throw std::invalid_argument("joint_loss: no supervised pixels in either term");

    JointLossValue out;
    out.lambda_ = cfg.lambda_;
    out.vor_nll = n_vor ? vor_sum / n_vor : 0.0;
    out.bg_nll = n_bg ? bg_sum / n_bg : 0.0;
    return out;
}

std::vector<double> joint_loss_grad(const ProbabilityMap& pred, const TriStateMask& vor,
                                    const TriStateMask& trimap, const JointLossConfig& cfg) {
    const double eps = cfg.clamp_eps;
    long n_vor = 0, n_bg = 0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        if (vor.labels[i] != -1) ++n_vor;
        if (trimap.labels[i] == 0) ++n_bg;
    }
    std::vector<double> grad(pred.values.size(), 0.0);
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const double p_raw = pred.values[i];
        if (p_raw <= eps || p_raw >= 1.0 - eps) continue;  // clamped: flat
        const double p = p_raw;
        if (vor.labels[i] != -1 && n_vor) {
            const double y = vor.labels[i];
            grad[i] += cfg.lambda_ * (-y / p + (1.0 - y) / (1.0 - p)) / n_vor;
        }
        if (trimap.labels[i] == 0 && n_bg) grad[i] += (1.0 / (1.0 - p)) / n_bg;
    }
    return grad;
}

namespace {

// Logit-space evaluation of the joint objective for training. Plain
// per-pixel sums scaled by 1/(H*W), matching the printed loss shape: the
// Voronoi term's aggregate weight stays proportional to its (small) pixel
// count, which is what keeps training insensitive to lambda over a wide
// range. The probability-space joint_loss above keeps the per-term-mean
// reporting contract.
double joint_batch_loss(const nn::Tensor& logits, const std::vector<const TriStateMask*>& vors,
                        const std::vector<const TriStateMask*>& trimaps, double lambda,
                        nn::Tensor& d_logits) {
    d_logits = nn::Tensor(logits.n, 1, logits.h, logits.w);
    const double inv_px = 1.0 / (static_cast<double>(logits.h) * logits.w);
    double total = 0.0;
    for (int n = 0; n < logits.n; ++n) {
        const TriStateMask& vor = *vors[n];
        const TriStateMask& tri = *trimaps[n];
        long n_vor = 0, n_bg = 0;
        for (size_t i = 0; i < vor.labels.size(); ++i) {
            if (vor.labels[i] != -1) ++n_vor;
            if (tri.labels[i] == 0) ++n_bg;
        }
        if (n_vor == 0 && n_bg == 0)
            throw std::invalid_argument("train_nsn: image " + std::to_string(n) +
                                        " has no supervised pixels in either term");
        double vor_sum = 0.0, bg_sum = 0.0;
        for (int r = 0; r < logits.h; ++r)
            for (int c = 0; c < logits.w; ++c) {
                const size_t i = static_cast<size_t>(r) * logits.w + c;
                const double x = logits.at(n, 0, r, c);
                const double sp = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
                const double sig = 1.0 / (1.0 + std::exp(-x));
                double g = 0.0;
                if (vor.labels[i] != -1) {
                    const double y = vor.labels[i];
                    vor_sum += sp - y * x;  // BCE-with-logits
                    g += lambda * (sig - y);
                }
                if (tri.labels[i] == 0) {
                    bg_sum += sp;  // -log(1 - sigmoid(x))
                    g += sig;
                }
                d_logits.at(n, 0, r, c) = static_cast<float>(g * inv_px / logits.n);
            }
        total += (lambda * vor_sum + bg_sum) * inv_px;
    }
    return total / logits.n;
}

}  // namespace

nn::Checkpoint train_nsn(const std::vector<RasterImage>& images,
                         const std::vector<TriStateMask>& vor_labels,
                         const std::vector<TriStateMask>& trimaps,
                         const detect::SegTrainConfig& cfg, const JointLossConfig& loss_cfg,
                         Supervision supervision, const std::string& config_hash) {
    if (images.empty()) throw std::invalid_argument("train_nsn: empty dataset");
    if (images.size() != vor_labels.size() || images.size() != trimaps.size())
        throw std::invalid_argument("train_nsn: label list size mismatch");
    for (size_t i = 0; i < images.size(); ++i)
        if (vor_labels[i].height != images[i].height || trimaps[i].height != images[i].height ||
            vor_labels[i].width != images[i].width || trimaps[i].width != images[i].width)
            throw std::invalid_argument("train_nsn: label shape mismatch at index " +
                                        std::to_string(i));

    nn::UNet net(nn::UNetConfig::preset(cfg.backbone), cfg.seed);
    std::vector<nn::Param*> params = net.params();
    nn::Adam opt;
    opt.lr = cfg.learning_rate;
    Rng order_rng(cfg.seed * 2654435761u + 0x5e6e5eu);

    const std::string task = supervision == Supervision::joint ? "nsn" : "nsn-pixel-only";
    std::vector<double> losses;
    nn::Checkpoint last_good = nn::Checkpoint::from_unet(net, task, config_hash, cfg.seed, losses);

    std::vector<int> order(images.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const RasterImage*> imgs;
            std::vector<const TriStateMask*> vors, tris;
            for (size_t i = start; i < end; ++i) {
                imgs.push_back(&images[order[i]]);
                vors.push_back(&vor_labels[order[i]]);
                tris.push_back(&trimaps[order[i]]);
            }
            for (auto* p : params) p->zero_grad();
            nn::Tensor logits = net.forward(nn::stack_images(imgs), true);
            nn::Tensor d_logits;
            double loss;
            if (supervision == Supervision::joint)
                loss = joint_batch_loss(logits, vors, tris, loss_cfg.lambda_, d_logits);
            else
                loss = detect::masked_bce_with_logits(logits, tris, &d_logits);
            net.backward(d_logits);
            opt.step(params);
            epoch_loss += loss;
            ++batches;
        }
        epoch_loss /= batches;
        if (!std::isfinite(epoch_loss)) {
            std::cerr << "train_nsn: non-finite loss at epoch " << epoch
                      << "; aborting and keeping last good checkpoint\n";
            return last_good;
        }
        losses.push_back(epoch_loss);
        last_good = nn::Checkpoint::from_unet(net, task, config_hash, cfg.seed, losses);
    }
    return last_good;
}

SegmentationResult run_segmentation(nn::UNet& net, const RasterImage& image, float threshold,
                                    int connectivity) {
    ProbabilityMap prob = detect::predict_probability(net, image);
    SegmentationResult out;
    out.mask = BinaryMask(image.height, image.width);
    for (size_t i = 0; i < prob.values.size(); ++i)
        out.mask.values[i] = prob.values[i] > threshold ? 1 : 0;
    out.instances = connected_components(out.mask, connectivity);
    return out;
}

}  // namespace nuc::segment
