#include "doctest.h"

#include <cmath>

#include "nuc/data.hpp"
#include "nuc/segment.hpp"

using namespace nuc;

namespace {

struct LossFixture {
    ProbabilityMap pred;
    TriStateMask vor;
    TriStateMask trimap;

    explicit LossFixture(uint32_t seed, int h = 12, int w = 12)
        : pred(h, w), vor(h, w), trimap(h, w) {
        Rng rng(seed);
        for (float& v : pred.values) v = static_cast<float>(rng.uniform(0.05, 0.95));
        for (size_t i = 0; i < vor.labels.size(); ++i) {
            const double u = rng.uniform();
            vor.labels[i] = u < 0.2 ? 1 : (u < 0.5 ? 0 : -1);
            const double t = rng.uniform();
            trimap.labels[i] = t < 0.3 ? 0 : (t < 0.6 ? 1 : -1);
        }
    }
};

}  // namespace

TEST_SUITE("segment") {

TEST_CASE("joint_loss default lambda matches the reference ablation setting") {
    CHECK(segment::JointLossConfig{}.lambda_ == 0.5);
}

TEST_CASE("joint_loss is ~0 for perfect predictions") {
    const int n = 8;
    ProbabilityMap pred(n, n);
    TriStateMask vor(n, n, -1), trimap(n, n, -1);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            if (r < 3) {
                vor.at(r, c) = 1;
                pred.at(r, c) = 1.f;
            } else if (r < 6) {
                vor.at(r, c) = 0;
                trimap.at(r, c) = 0;
                pred.at(r, c) = 0.f;
            }
        }
    segment::JointLossValue v = segment::joint_loss(pred, vor, trimap, {});
    CHECK(v.total() >= 0.0);
    CHECK(v.total() < 1e-6);  // only the log-clamp epsilon remains
}

TEST_CASE("joint_loss doubling lambda doubles the first term exactly") {
    LossFixture fx(1);
    for (double lambda : {0.5, 1.0, 2.5}) {
        segment::JointLossValue a = segment::joint_loss(fx.pred, fx.vor, fx.trimap, {lambda});
        segment::JointLossValue b =
            segment::joint_loss(fx.pred, fx.vor, fx.trimap, {2.0 * lambda});
        CHECK(a.vor_nll == b.vor_nll);  // same decomposition, bitwise
        CHECK(a.bg_nll == b.bg_nll);
        // first term: L(2l) - L_bg == 2 * (L(l) - L_bg), exact in doubles
        CHECK(b.lambda_ * b.vor_nll == 2.0 * (a.lambda_ * a.vor_nll));
        CHECK(b.total() ==
              doctest::Approx(2.0 * (a.total() - a.bg_nll) + a.bg_nll).epsilon(1e-15));
    }
}

TEST_CASE("joint_loss ignores unsupervised pixels bitwise") {
    LossFixture fx(2);
    segment::JointLossValue base = segment::joint_loss(fx.pred, fx.vor, fx.trimap, {});

    ProbabilityMap perturbed = fx.pred;
    int touched = 0;
    Rng rng(3);
    for (size_t i = 0; i < perturbed.values.size(); ++i)
        if (fx.vor.labels[i] == -1 && fx.trimap.labels[i] != 0) {
            perturbed.values[i] = static_cast<float>(rng.uniform());
            ++touched;
        }
    REQUIRE(touched > 0);
    segment::JointLossValue same = segment::joint_loss(perturbed, fx.vor, fx.trimap, {});
    CHECK(same.vor_nll == base.vor_nll);
    CHECK(same.bg_nll == base.bg_nll);
    CHECK(same.total() == base.total());
}

TEST_CASE("joint_loss gradient matches central finite differences") {
    LossFixture fx(4);
    segment::JointLossConfig cfg;
    std::vector<double> grad = segment::joint_loss_grad(fx.pred, fx.vor, fx.trimap, cfg);

    Rng rng(5);
    int checked = 0;
    while (checked < 100) {
        const size_t i = rng.next_u32() % fx.pred.values.size();
        if (fx.vor.labels[i] == -1 && fx.trimap.labels[i] != 0) continue;  // unsupervised
        const float saved = fx.pred.values[i];
        const float h = 1e-4f;
        fx.pred.values[i] = saved + h;
        const double lp = segment::joint_loss(fx.pred, fx.vor, fx.trimap, cfg).total();
        fx.pred.values[i] = saved - h;
        const double lm = segment::joint_loss(fx.pred, fx.vor, fx.trimap, cfg).total();
        fx.pred.values[i] = saved;
        const double numeric = (lp - lm) / (2.0 * double(h));
        const double scale = std::max(1.0, std::abs(grad[i]));
        CHECK(std::abs(grad[i] - numeric) / scale < 1e-4);
        ++checked;
    }
}

TEST_CASE("joint_loss rejects empty supervision, shape mismatch, bad lambda") {
    ProbabilityMap pred(4, 4, 0.5f);
    TriStateMask vor(4, 4, -1);
    TriStateMask trimap(4, 4, -1);
    CHECK_THROWS_AS(segment::joint_loss(pred, vor, trimap, {}), std::invalid_argument);

    TriStateMask small(3, 3, 0);
    CHECK_THROWS_AS(segment::joint_loss(pred, small, trimap, {}), std::invalid_argument);
    trimap.at(0, 0) = 0;
    CHECK_THROWS_AS(segment::joint_loss(pred, vor, trimap, {0.0}), std::invalid_argument);
}

TEST_CASE("train_nsn loss decreases, reproducible, validates alignment") {
    std::vector<RasterImage> imgs;
    std::vector<TriStateMask> vors, tris;
    for (int i = 0; i < 8; ++i) {
        data::SynthConfig sc;
        sc.image_size = 32;
        sc.nuclei_min = 2;
        sc.nuclei_max = 4;
        sc.radius_min = 3;
        sc.radius_max = 5;
        sc.seed = 70 + i;
        auto s = data::synth_nuclei(sc);
        imgs.push_back(s.image);
        TriStateMask tri(32, 32, 0);
        for (size_t k = 0; k < tri.labels.size(); ++k)
            if (s.instances.labels[k] > 0) tri.labels[k] = 1;
        tris.push_back(tri);
        vors.push_back(detect::voronoi_labels(s.centers, 32, 32, 2));
    }
    detect::SegTrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-3;
    cfg.seed = 9;

    nn::Checkpoint a = segment::train_nsn(imgs, vors, tris, cfg, {});
    REQUIRE(a.losses.size() == 4);
    CHECK(a.losses.back() < a.losses.front());
    CHECK(a.task == "nsn");

    nn::Checkpoint b = segment::train_nsn(imgs, vors, tris, cfg, {});
    CHECK(a.losses == b.losses);

    nn::Checkpoint px = segment::train_nsn(imgs, vors, tris, cfg, {},
                                           segment::Supervision::pixel_only);
    CHECK(px.task == "nsn-pixel-only");
    CHECK(px.losses.back() < px.losses.front());

    std::vector<TriStateMask> wrong = vors;
    wrong[0] = TriStateMask(16, 16, 0);
    CHECK_THROWS_AS(segment::train_nsn(imgs, wrong, tris, cfg, {}), std::invalid_argument);
}

TEST_CASE("run_segmentation thresholds the probability map and labels components") {
    nn::UNetConfig ucfg;
    ucfg.widths = {8, 12};
    nn::UNet net(ucfg, 13);
    Rng rng(14);
    RasterImage img(16, 16, 3);
    for (float& v : img.pixels) v = static_cast<float>(rng.uniform());

    segment::SegmentationResult res = segment::run_segmentation(net, img, 0.5f, 8);
    ProbabilityMap prob = detect::predict_probability(net, img);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
            CHECK(static_cast<bool>(res.mask.at(r, c)) == (prob.at(r, c) > 0.5f));
    InstanceMap expect = connected_components(res.mask, 8);
    CHECK(res.instances.labels == expect.labels);

    // an all-background prediction yields an empty instance map
    nn::UNet biased(ucfg, 13);
    biased.head.bias.w.v[0] = -50.f;
    segment::SegmentationResult empty = segment::run_segmentation(biased, img, 0.5f, 8);
    CHECK(empty.instances.max_id() == 0);

    // two well-separated blobs stay two instances
    BinaryMask blobs(16, 16);
    for (int r = 2; r < 5; ++r)
        for (int c = 2; c < 5; ++c) blobs.at(r, c) = 1;
    for (int r = 10; r < 13; ++r)
        for (int c = 10; c < 13; ++c) blobs.at(r, c) = 1;
    CHECK(connected_components(blobs, 8).max_id() == 2);
}

}  // TEST_SUITE segment
