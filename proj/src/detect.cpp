#include "nuc/detect.hpp"

#include <cmath>
#include <iostream>
#include <limits>

namespace nuc::detect {

double masked_bce_with_logits(const nn::Tensor& logits,
                              const std::vector<const TriStateMask*>& masks,
                              nn::Tensor* d_logits) {
    long supervised = 0;
    for (const auto* m : masks)
        for (int8_t v : m->labels)
            if (v != -1) ++supervised;
    if (supervised == 0) throw std::invalid_argument("masked_bce: no supervised pixels");

    if (d_logits) *d_logits = nn::Tensor(logits.n, 1, logits.h, logits.w);
    double loss = 0.0;
    for (int n = 0; n < logits.n; ++n) {
        const TriStateMask& mask = *masks[n];
        for (int r = 0; r < logits.h; ++r)
            for (int c = 0; c < logits.w; ++c) {
                const int8_t y = mask.at(r, c);
                if (y == -1) continue;
                const double x = logits.at(n, 0, r, c);
                // softplus(x) - y*x, numerically stable
                const double sp = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
                loss += sp - double(y) * x;
                if (d_logits) {
                    const double sig = 1.0 / (1.0 + std::exp(-x));
                    d_logits->at(n, 0, r, c) = static_cast<float>((sig - y) / supervised);
                }
            }
    }
    return loss / supervised;
}

nn::Checkpoint train_ndn(const std::vector<RasterImage>& images,
                         const std::vector<TriStateMask>& pseudo_masks,
                         const SegTrainConfig& cfg, const std::string& config_hash) {
    if (images.empty()) throw std::invalid_argument("train_ndn: empty dataset");
    if (images.size() != pseudo_masks.size())
        throw std::invalid_argument("train_ndn: image/mask count mismatch");
    for (size_t i = 0; i < images.size(); ++i) {
        if (pseudo_masks[i].height != images[i].height || pseudo_masks[i].width != images[i].width)
            throw std::invalid_argument("train_ndn: mask shape mismatch at index " +
                                        std::to_string(i));
        bool any = false;
        for (int8_t v : pseudo_masks[i].labels)
            if (v != -1) { any = true; break; }
        if (!any)
            throw std::invalid_argument("train_ndn: all-ignore mask at index " + std::to_string(i) +
                                        " provides no supervision signal");
    }

    nn::UNet net(nn::UNetConfig::preset(cfg.backbone), cfg.seed);
    std::vector<nn::Param*> params = net.params();
    nn::Adam opt;
    opt.lr = cfg.learning_rate;
    Rng order_rng(cfg.seed * 2654435761u + 0xdec0deu);

    std::vector<double> losses;
    nn::Checkpoint last_good = nn::Checkpoint::from_unet(net, "ndn", config_hash, cfg.seed, losses);

    std::vector<int> order(images.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const RasterImage*> imgs;
            std::vector<const TriStateMask*> masks;
            for (size_t i = start; i < end; ++i) {
                imgs.push_back(&images[order[i]]);
                masks.push_back(&pseudo_masks[order[i]]);
            }
            for (auto* p : params) p->zero_grad();
            nn::Tensor logits = net.forward(nn::stack_images(imgs), true);
            nn::Tensor d_logits;
            const double loss = masked_bce_with_logits(logits, masks, &d_logits);
            net.backward(d_logits);
            opt.step(params);
            epoch_loss += loss;
            ++batches;
        }
        epoch_loss /= batches;
        if (!std::isfinite(epoch_loss)) {
            std::cerr << "train_ndn: non-finite loss at epoch " << epoch
                      << "; aborting and keeping last good checkpoint\n";
            return last_good;
        }
        losses.push_back(epoch_loss);
        last_good = nn::Checkpoint::from_unet(net, "ndn", config_hash, cfg.seed, losses);
    }
    return last_good;
}

ProbabilityMap predict_probability(nn::UNet& net, const RasterImage& image) {
    nn::Tensor logits = net.forward(nn::image_to_tensor(image), false);
    ProbabilityMap map(image.height, image.width);
    for (int r = 0; r < image.height; ++r)
        for (int c = 0; c < image.width; ++c) {
            const double x = logits.at(0, 0, r, c);
            map.at(r, c) = static_cast<float>(1.0 / (1.0 + std::exp(-x)));
        }
    return map;
}

TriStateMask threshold_trimap(const ProbabilityMap& prob, const ThresholdConfig& cfg) {
    if (!(cfg.t_bg <= cfg.t_fg))
        throw std::invalid_argument("threshold_trimap: t_bg must be <= t_fg");
    TriStateMask mask(prob.height, prob.width);
    for (size_t i = 0; i < prob.values.size(); ++i) {
        const float p = prob.values[i];
        mask.labels[i] = p > cfg.t_fg ? 1 : (p < cfg.t_bg ? 0 : -1);
    }
    return mask;
}

PointSet local_maxima(const ProbabilityMap& prob, const PeakConfig& cfg) {
    if (cfg.radius < 1) throw std::invalid_argument("local_maxima: radius must be >= 1");
    PointSet out;
    for (int r = 0; r < prob.height; ++r)
        for (int c = 0; c < prob.width; ++c) {
            const float p = prob.at(r, c);
            if (p < cfg.min_prob) continue;
            bool is_max = true;
            const int r0 = std::max(0, r - cfg.radius), r1 = std::min(prob.height - 1, r + cfg.radius);
            const int c0 = std::max(0, c - cfg.radius), c1 = std::min(prob.width - 1, c + cfg.radius);
            for (int i = r0; i <= r1 && is_max; ++i)
                for (int j = c0; j <= c1; ++j) {
                    if (i == r && j == c) continue;
                    if (prob.at(i, j) >= p) { is_max = false; break; }
                }
            if (is_max) out.points.push_back({r, c});
        }
    return out;
}

std::vector<int32_t> voronoi_cells(const PointSet& points, int height, int width) {
    if (points.empty()) throw std::invalid_argument("voronoi_labels: at least one seed required");
    for (const Point& p : points.points)
        if (p.row < 0 || p.row >= height || p.col < 0 || p.col >= width)
            throw std::invalid_argument("voronoi_labels: seed outside raster bounds");

    const int n = static_cast<int>(points.size());
    std::vector<int32_t> cell(static_cast<size_t>(height) * width, 0);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            long best = std::numeric_limits<long>::max();
            int best_id = -1;
            bool tie = false;
            for (int s = 0; s < n; ++s) {
                const long dr = r - points.points[s].row;
                const long dc = c - points.points[s].col;
                const long d = dr * dr + dc * dc;
                if (d < best) { best = d; best_id = s; tie = false; }
                else if (d == best) tie = true;
            }
            cell[static_cast<size_t>(r) * width + c] = tie ? -1 : best_id;
        }
    return cell;
}

TriStateMask voronoi_labels(const PointSet& points, int height, int width,
                            int seed_disk_radius) {
    std::vector<int32_t> cell = voronoi_cells(points, height, width);
    TriStateMask mask(height, width, -1);
    static const int dr4[4] = {-1, 1, 0, 0};
    static const int dc4[4] = {0, 0, -1, 1};
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const int32_t own = cell[static_cast<size_t>(r) * width + c];
            bool edge = own == -1;  // exact ties are edges
            for (int i = 0; i < 4 && !edge; ++i) {
                const int nr = r + dr4[i], nc = c + dc4[i];
                if (nr < 0 || nr >= height || nc < 0 || nc >= width) continue;
                const int32_t other = cell[static_cast<size_t>(nr) * width + nc];
                if (other >= 0 && other != own) edge = true;  // spans another cell
            }
            if (edge) mask.at(r, c) = 0;
        }

    // seed disks override edges; seeds are certainly foreground
    const long rr = static_cast<long>(seed_disk_radius) * seed_disk_radius;
    for (const Point& p : points.points)
        for (int dr = -seed_disk_radius; dr <= seed_disk_radius; ++dr)
            for (int dc = -seed_disk_radius; dc <= seed_disk_radius; ++dc) {
                if (static_cast<long>(dr) * dr + static_cast<long>(dc) * dc > rr) continue;
                const int r = p.row + dr, c = p.col + dc;
                if (r >= 0 && r < height && c >= 0 && c < width) mask.at(r, c) = 1;
            }
    return mask;
}

}  // namespace nuc::detect
