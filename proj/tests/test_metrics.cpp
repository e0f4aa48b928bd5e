#include "doctest.h"

#include <cmath>

#include "oracles.hpp"

#include "nuc/core.hpp"
#include "nuc/metrics.hpp"

using namespace nuc;

using namespace oracles;


TEST_SUITE("metrics") {

TEST_CASE("pixel_scores identity") {
    BinaryMask a(4, 4);
    a.at(1, 1) = a.at(2, 2) = 1;
    metrics::PixelScores s = metrics::pixel_scores(a, a);
    CHECK(s.f1 == 1.0);
    CHECK(s.iou == 1.0);
}

TEST_CASE("pixel_scores arithmetic from the definitions") {
    // tp=50, fp=25, fn=25 -> f1 = 100/150, iou = 50/100
    BinaryMask pred(10, 10), gt(10, 10);
    int k = 0;
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c, ++k) {
            if (k < 50) { pred.at(r, c) = 1; gt.at(r, c) = 1; }
            else if (k < 75) pred.at(r, c) = 1;
            else gt.at(r, c) = 1;
        }
    metrics::PixelScores s = metrics::pixel_scores(pred, gt);
    CHECK(s.tp == 50);
    CHECK(s.fp == 25);
    CHECK(s.fn == 25);
    CHECK(s.f1 == doctest::Approx(100.0 / 150.0));
    CHECK(s.iou == doctest::Approx(0.5));
}

TEST_CASE("pixel_scores empty prediction") {
    BinaryMask pred(4, 4), gt(4, 4);
    gt.at(0, 0) = 1;
    metrics::PixelScores s = metrics::pixel_scores(pred, gt);
    CHECK(s.f1 == 0.0);
    CHECK(s.iou == 0.0);
}

TEST_CASE("pixel identities on random confusion counts") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const long tp = rng.uniform_int(0, 60), fp = rng.uniform_int(0, 60),
                   fn = rng.uniform_int(0, 60);
        if (tp + fp + fn == 0 || tp + fp + fn > 144) continue;
        BinaryMask pred(12, 12), gt(12, 12);
        long k = 0;
        for (int r = 0; r < 12; ++r)
            for (int c = 0; c < 12; ++c, ++k) {
                if (k < tp) { pred.at(r, c) = 1; gt.at(r, c) = 1; }
                else if (k < tp + fp) pred.at(r, c) = 1;
                else if (k < tp + fp + fn) gt.at(r, c) = 1;
            }
        metrics::PixelScores s = metrics::pixel_scores(pred, gt);
        CHECK(s.tp == tp);
        CHECK(s.f1 == 2.0 * tp / (2 * tp + fp + fn));
        CHECK(s.iou == 1.0 * tp / (tp + fp + fn));
        CHECK(s.f1 >= s.iou);
        // equality exactly when fp+fn == 0 or tp == 0
        CHECK((s.f1 == s.iou) == (fp + fn == 0 || tp == 0));
    }
}

TEST_CASE("object_dice identity and empty cases") {
    Rng rng(31);
    InstanceMap m = random_instances(rng, 16, 16, 4);
    if (m.max_id() > 0) CHECK(metrics::object_dice(m, m) == doctest::Approx(1.0));

    InstanceMap gt(8, 8), empty(8, 8);
    gt.at(3, 3) = gt.at(3, 4) = gt.at(4, 3) = gt.at(4, 4) = 1;
    CHECK(metrics::object_dice(empty, gt) == 0.0);
    CHECK(metrics::object_dice(empty, empty) == 1.0);  // vacuous agreement
}

TEST_CASE("object_dice matches brute-force transcription on 100 random pairs") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        InstanceMap gt = random_instances(rng, 32, 32, 6);
        InstanceMap pred = random_instances(rng, 32, 32, 6);
        const double fast = metrics::object_dice(pred, gt);
        const double slow = dice_obj_oracle(pred, gt);
        CHECK(fast == doctest::Approx(slow).epsilon(1e-9));
    }
}

TEST_CASE("aji identity, empty prediction, empty gt rejection") {
    Rng rng(41);
    InstanceMap m = random_instances(rng, 16, 16, 4);
    while (m.max_id() == 0) m = random_instances(rng, 16, 16, 4);
    CHECK(metrics::aji(m, m) == doctest::Approx(1.0));

    InstanceMap empty(16, 16);
    CHECK(metrics::aji(empty, m) == 0.0);
    CHECK_THROWS_AS(metrics::aji(m, empty), std::invalid_argument);
}

TEST_CASE("aji matches brute-force transcription on 100 random pairs") {
    Rng rng(202);
    int done = 0;
    while (done < 100) {
        InstanceMap gt = random_instances(rng, 32, 32, 6);
        if (gt.max_id() == 0) continue;
        bool has_gt = false;
        for (int32_t v : gt.labels) has_gt |= v > 0;
        if (!has_gt) continue;
        InstanceMap pred = random_instances(rng, 32, 32, 6);
        const double fast = metrics::aji(pred, gt);
        const double slow = aji_oracle(pred, gt);
        CHECK(fast == doctest::Approx(slow).epsilon(1e-9));
        ++done;
    }
}

TEST_CASE("aji equals pixel IoU for single-instance maps") {
    Rng rng(55);
    for (int trial = 0; trial < 20; ++trial) {
        InstanceMap gt(16, 16), pred(16, 16);
        for (int r = 4; r < 10; ++r)
            for (int c = 4; c < 10; ++c) gt.at(r, c) = 1;
        const int dr = rng.uniform_int(0, 5), dc = rng.uniform_int(0, 5);
        for (int r = 4; r < 10; ++r)
            for (int c = 4; c < 10; ++c) pred.at(r + dr, c + dc) = 1;
        BinaryMask bg(16, 16), bp(16, 16);
        for (size_t i = 0; i < gt.labels.size(); ++i) {
            bg.values[i] = gt.labels[i] > 0;
            bp.values[i] = pred.labels[i] > 0;
        }
        CHECK(metrics::aji(pred, gt) ==
              doctest::Approx(metrics::pixel_scores(bp, bg).iou).epsilon(1e-12));
    }
}

TEST_CASE("object metrics invariant under instance-id permutation") {
    Rng rng(66);
    InstanceMap gt = random_instances(rng, 24, 24, 5);
    InstanceMap pred = random_instances(rng, 24, 24, 5);
    while (gt.max_id() < 2) gt = random_instances(rng, 24, 24, 5);

    InstanceMap permuted = pred;
    const int n = permuted.max_id();
    if (n >= 2) {
        std::vector<int> perm(n + 1);
        for (int i = 0; i <= n; ++i) perm[i] = i;
        std::swap(perm[1], perm[n]);
        for (int32_t& v : permuted.labels) v = perm[v];
        CHECK(metrics::aji(permuted, gt) == doctest::Approx(metrics::aji(pred, gt)).epsilon(1e-12));
        CHECK(metrics::object_dice(permuted, gt) ==
              doctest::Approx(metrics::object_dice(pred, gt)).epsilon(1e-12));
    }
}

TEST_CASE("match_points identical sets") {
    PointSet pts;
    pts.points = {{1, 1}, {5, 5}, {9, 2}};
    metrics::PointMatch m = metrics::match_points(pts, pts, 3.0);
    CHECK(m.tp == 3);
    CHECK(m.fp == 0);
    CHECK(m.fn == 0);
}

TEST_CASE("match_points empty prediction") {
    PointSet pred, gt;
    gt.points = {{1, 1}, {2, 2}};
    metrics::PointMatch m = metrics::match_points(pred, gt, 3.0);
    CHECK(m.fp == 0);
    CHECK(m.fn == 2);
}

TEST_CASE("match_points equals exhaustive search on random sets") {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        PointSet pred, gt;
        const int np = rng.uniform_int(0, 8), ng = rng.uniform_int(0, 8);
        for (int i = 0; i < np; ++i)
            pred.points.push_back({rng.uniform_int(0, 20), rng.uniform_int(0, 20)});
        for (int i = 0; i < ng; ++i)
            gt.points.push_back({rng.uniform_int(0, 20), rng.uniform_int(0, 20)});
        for (double radius : {1.5, 3.0, 6.0}) {
            metrics::PointMatch m = metrics::match_points(pred, gt, radius);
            CHECK(m.tp == brute_max_matching(pred, gt, radius));
        }
    }
}

TEST_CASE("match_points swap symmetry") {
    Rng rng(88);
    PointSet a, b;
    for (int i = 0; i < 6; ++i) {
        a.points.push_back({rng.uniform_int(0, 15), rng.uniform_int(0, 15)});
        b.points.push_back({rng.uniform_int(0, 15), rng.uniform_int(0, 15)});
    }
    metrics::PointMatch ab = metrics::match_points(a, b, 4.0);
    metrics::PointMatch ba = metrics::match_points(b, a, 4.0);
    CHECK(ab.tp == ba.tp);
    CHECK(ab.fp == ba.fn);
    CHECK(ab.fn == ba.fp);
}

TEST_CASE("detection_scores perfect detection and count error") {
    PointSet p1, p2;
    p1.points = {{1, 1}, {4, 4}};
    p2.points = {{8, 8}};
    metrics::DetectionScores perfect = metrics::detection_scores({p1, p2}, {p1, p2}, 3.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.mp == 0.0);

    // counts {9, 11} vs {10, 10} -> mp = 1.0
    auto make_n = [](int n) {
        PointSet s;
        for (int i = 0; i < n; ++i) s.points.push_back({i, 2 * i});
        return s;
    };
    metrics::DetectionScores counts =
        metrics::detection_scores({make_n(9), make_n(11)}, {make_n(10), make_n(10)}, 1.0);
    CHECK(counts.mp == 1.0);
}

}  // TEST_SUITE metrics
