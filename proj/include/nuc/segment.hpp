#pragma once

// Nuclei segmentation stage: joint pixel-level + instance-level training and
// end-to-end inference.

#include <vector>

#include "nuc/core.hpp"
#include "nuc/detect.hpp"
#include "nuc/nn.hpp"

namespace nuc::segment {

struct JointLossConfig {
    double lambda_ = 0.5;     // partition enhancement coefficient
    double clamp_eps = 1e-7;  // log clamp
};

enum class Supervision { joint, pixel_only };

// Loss decomposition. The Voronoi term is a per-supervised-pixel mean BCE
// against the Voronoi labels; the background term penalizes foreground
// probability on pixel-level background only. total() = lambda * vor + bg.
struct JointLossValue {
    double vor_nll = 0.0;
    double bg_nll = 0.0;
    double lambda_ = 0.5;
    double total() const { return lambda_ * vor_nll + bg_nll; }
};

// Negative log-likelihood form of the joint objective over probabilities.
// Pixels with vor == -1 and trimap != 0 do not touch the sum at all.
// Rejects inputs where both terms have zero supervised pixels.
JointLossValue joint_loss(const ProbabilityMap& pred, const TriStateMask& vor,
                          const TriStateMask& trimap, const JointLossConfig& cfg);

// Analytic d(total)/d(pred) at every pixel; zero where unsupervised or clamped.
std::vector<double> joint_loss_grad(const ProbabilityMap& pred, const TriStateMask& vor,
                                    const TriStateMask& trimap, const JointLossConfig& cfg);

// Joint (or pixel-only baseline) training of the segmentation network.
nn::Checkpoint train_nsn(const std::vector<RasterImage>& images,
                         const std::vector<TriStateMask>& vor_labels,
                         const std::vector<TriStateMask>& trimaps,
                         const detect::SegTrainConfig& cfg, const JointLossConfig& loss_cfg,
                         Supervision supervision = Supervision::joint,
                         const std::string& config_hash = "");

struct SegmentationResult {
    BinaryMask mask;
    InstanceMap instances;
};

// Foreground = probability > threshold; instances via connected components.
SegmentationResult run_segmentation(nn::UNet& net, const RasterImage& image,
                                    float threshold = 0.5f, int connectivity = 8);

}  // namespace nuc::segment
