#pragma once

// Evaluation metrics: pixel IoU/F1, object-level Dice, Aggregated Jaccard
// Index, one-to-one point matching with detection P/R/F1 and the counting
// error MP.

#include <vector>

#include "nuc/core.hpp"

namespace nuc::metrics {

struct PixelScores {
    double iou = 0.0;
    double f1 = 0.0;
    long tp = 0, fp = 0, fn = 0;
};

struct DetectionScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mp = 0.0;  // mean absolute per-image count error
    double match_radius = 0.0;
    long tp = 0, fp = 0, fn = 0;
};

struct PointMatch {
    long tp = 0, fp = 0, fn = 0;
    std::vector<std::pair<int, int>> pairs;  // (pred index, gt index)
};

PixelScores pixel_scores(const BinaryMask& pred, const BinaryMask& gt);

// Eq.-style object-level Dice: pixel-proportion-weighted Dice over
// maximum-overlap matches in both directions; unmatched objects contribute 0.
// Both maps empty is defined as 1.
double object_dice(const InstanceMap& pred, const InstanceMap& gt);

// Aggregated Jaccard Index. Ground-truth instances processed in ascending id
// order; each consumes the available prediction with maximal intersection
// (ties: larger prediction, then lower id). Unconsumed predictions inflate
// the denominator. Empty ground truth is rejected.
double aji(const InstanceMap& pred, const InstanceMap& gt);

// One-to-one matching maximizing match count among pairs within `radius`
// (Euclidean, inclusive). Deterministic.
PointMatch match_points(const PointSet& pred, const PointSet& gt, double radius);

// Micro-averaged P/R/F1 over aligned per-image point sets plus MP.
DetectionScores detection_scores(const std::vector<PointSet>& pred_sets,
                                 const std::vector<PointSet>& gt_sets, double radius);

}  // namespace nuc::metrics
