#include "nuc/metrics.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace nuc::metrics {

PixelScores pixel_scores(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("pixel_scores: shape mismatch");
    PixelScores s;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const bool p = pred.values[i] != 0, g = gt.values[i] != 0;
        if (p && g) ++s.tp;
        else if (p) ++s.fp;
        else if (g) ++s.fn;
    }
    const long denom_f1 = 2 * s.tp + s.fp + s.fn;
    const long denom_iou = s.tp + s.fp + s.fn;
    s.f1 = denom_f1 ? 2.0 * s.tp / denom_f1 : 0.0;
    s.iou = denom_iou ? 1.0 * s.tp / denom_iou : 0.0;
    return s;
}

namespace {

struct InstanceStats {
    std::vector<long> sizes;                    // per id, 1-based -> index id-1
    std::map<std::pair<int, int>, long> overlap;  // (gt id, pred id) -> pixels
};

InstanceStats gather(const InstanceMap& pred, const InstanceMap& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::invalid_argument("instance metrics: shape mismatch");
    InstanceStats st;
    for (size_t i = 0; i < gt.labels.size(); ++i) {
        const int g = gt.labels[i], p = pred.labels[i];
        if (g > 0 && p > 0) ++st.overlap[{g, p}];
    }
    return st;
}

std::vector<long> instance_sizes(const InstanceMap& map) {
    std::vector<long> sizes(map.max_id(), 0);
    for (int32_t v : map.labels)
        if (v > 0) ++sizes[v - 1];
    return sizes;
}

}  // namespace

double object_dice(const InstanceMap& pred, const InstanceMap& gt) {
    InstanceStats st = gather(pred, gt);
    std::vector<long> gt_sizes = instance_sizes(gt);
    std::vector<long> pr_sizes = instance_sizes(pred);
    long gt_total = 0, pr_total = 0;
    for (long s : gt_sizes) gt_total += s;
    for (long s : pr_sizes) pr_total += s;

    if (gt_total == 0 && pr_total == 0) return 1.0;  // vacuous agreement

    // best-overlap partner per side; ties -> larger partner, then lower id
    const int n_gt = static_cast<int>(gt_sizes.size());
    const int n_pr = static_cast<int>(pr_sizes.size());
    std::vector<long> best_ov_gt(n_gt, 0), best_ov_pr(n_pr, 0);
    std::vector<int> best_pr_for_gt(n_gt, -1), best_gt_for_pr(n_pr, -1);
    for (const auto& [key, ov] : st.overlap) {
        const int g = key.first - 1, p = key.second - 1;
        if (ov > best_ov_gt[g] ||
            (ov == best_ov_gt[g] && best_pr_for_gt[g] >= 0 &&
             (pr_sizes[p] > pr_sizes[best_pr_for_gt[g]] ||
              (pr_sizes[p] == pr_sizes[best_pr_for_gt[g]] && p < best_pr_for_gt[g])))) {
            best_ov_gt[g] = ov;
            best_pr_for_gt[g] = p;
        }
        if (ov > best_ov_pr[p] ||
            (ov == best_ov_pr[p] && best_gt_for_pr[p] >= 0 &&
             (gt_sizes[g] > gt_sizes[best_gt_for_pr[p]] ||
              (gt_sizes[g] == gt_sizes[best_gt_for_pr[p]] && g < best_gt_for_pr[p])))) {
            best_ov_pr[p] = ov;
            best_gt_for_pr[p] = g;
        }
    }

    double gt_side = 0.0;
    for (int g = 0; g < n_gt; ++g) {
        if (gt_sizes[g] == 0 || best_pr_for_gt[g] < 0) continue;  // unmatched -> Dice 0
        const int p = best_pr_for_gt[g];
        const double dice = 2.0 * best_ov_gt[g] / (gt_sizes[g] + pr_sizes[p]);
        gt_side += (double(gt_sizes[g]) / gt_total) * dice;
    }
    double pr_side = 0.0;
    for (int p = 0; p < n_pr; ++p) {
        if (pr_sizes[p] == 0 || best_gt_for_pr[p] < 0) continue;
        const int g = best_gt_for_pr[p];
        const double dice = 2.0 * best_ov_pr[p] / (gt_sizes[g] + pr_sizes[p]);
        pr_side += (double(pr_sizes[p]) / pr_total) * dice;
    }
    return 0.5 * (gt_side + pr_side);
}

double aji(const InstanceMap& pred, const InstanceMap& gt) {
    std::vector<long> gt_sizes = instance_sizes(gt);
    std::vector<long> pr_sizes = instance_sizes(pred);
    long gt_total = 0;
    for (long s : gt_sizes) gt_total += s;
    if (gt_total == 0) throw std::invalid_argument("aji: empty ground truth is undefined");

    InstanceStats st = gather(pred, gt);
    const int n_gt = static_cast<int>(gt_sizes.size());
    const int n_pr = static_cast<int>(pr_sizes.size());
    std::vector<bool> used(n_pr, false);

    double num = 0.0, den = 0.0;
    for (int g = 0; g < n_gt; ++g) {
        if (gt_sizes[g] == 0) continue;
        int best_p = -1;
        long best_ov = 0;
        for (int p = 0; p < n_pr; ++p) {
            if (used[p]) continue;
            auto it = st.overlap.find({g + 1, p + 1});
            if (it == st.overlap.end()) continue;
            const long ov = it->second;
            if (ov > best_ov || (ov == best_ov && best_p >= 0 &&
                                 (pr_sizes[p] > pr_sizes[best_p] ||
                                  (pr_sizes[p] == pr_sizes[best_p] && p < best_p)))) {
                best_ov = ov;
                best_p = p;
            }
        }
        if (best_p >= 0 && best_ov > 0) {
            used[best_p] = true;
            num += best_ov;
            den += gt_sizes[g] + pr_sizes[best_p] - best_ov;  // union
        } else {
            den += gt_sizes[g];  // union with the empty set
        }
    }
    for (int p = 0; p < n_pr; ++p)
        if (!used[p]) den += pr_sizes[p];  // unmatched predictions
    return den > 0.0 ? num / den : 0.0;
}

namespace {

// Kuhn augmenting-path maximum bipartite matching; deterministic given the
// adjacency order.
bool try_augment(int u, const std::vector<std::vector<int>>& adj, std::vector<int>& match_gt,
                 std::vector<bool>& visited) {
    for (int v : adj[u]) {
        if (visited[v]) continue;
        visited[v] = true;
        if (match_gt[v] < 0 || try_augment(match_gt[v], adj, match_gt, visited)) {
            match_gt[v] = u;
            return true;
        }
    }
    return false;
}

}  // namespace

PointMatch match_points(const PointSet& pred, const PointSet& gt, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("match_points: radius must be > 0");
    const int np = static_cast<int>(pred.size());
    const int ng = static_cast<int>(gt.size());
    std::vector<std::vector<int>> adj(np);
    const double r2 = radius * radius;
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < ng; ++j) {
            const double dr = pred.points[i].row - gt.points[j].row;
            const double dc = pred.points[i].col - gt.points[j].col;
            if (dr * dr + dc * dc <= r2) adj[i].push_back(j);
        }

    std::vector<int> match_gt(ng, -1);
    long matched = 0;
    for (int i = 0; i < np; ++i) {
        std::vector<bool> visited(ng, false);
        if (try_augment(i, adj, match_gt, visited)) ++matched;
    }

    PointMatch out;
    out.tp = matched;
    out.fp = np - matched;
    out.fn = ng - matched;
    for (int j = 0; j < ng; ++j)
        if (match_gt[j] >= 0) out.pairs.emplace_back(match_gt[j], j);
    return out;
}

DetectionScores detection_scores(const std::vector<PointSet>& pred_sets,
                                 const std::vector<PointSet>& gt_sets, double radius) {
    if (pred_sets.size() != gt_sets.size())
        throw std::invalid_argument("detection_scores: list size mismatch");
    DetectionScores s;
    s.match_radius = radius;
    double abs_err = 0.0;
    for (size_t i = 0; i < pred_sets.size(); ++i) {
        PointMatch m = match_points(pred_sets[i], gt_sets[i], radius);
        s.tp += m.tp;
        s.fp += m.fp;
        s.fn += m.fn;
        abs_err += std::abs(static_cast<double>(pred_sets[i].size()) -
                            static_cast<double>(gt_sets[i].size()));
    }
    s.precision = (s.tp + s.fp) ? double(s.tp) / (s.tp + s.fp) : 0.0;
    s.recall = (s.tp + s.fn) ? double(s.tp) / (s.tp + s.fn) : 0.0;
    s.f1 = (2 * s.tp + s.fp + s.fn) ? 2.0 * s.tp / (2 * s.tp + s.fp + s.fn) : 0.0;
    s.mp = pred_sets.empty() ? 0.0 : abs_err / pred_sets.size();
    return s;
}

}  // namespace nuc::metrics
