#include "doctest.h"

#include <cmath>
#include <set>

#include "nuc/data.hpp"
#include "nuc/detect.hpp"
#include "oracles.hpp"

using namespace nuc;

TEST_SUITE("detect") {

TEST_CASE("threshold_trimap rules and boundary cases") {
    ProbabilityMap p(1, 4);
    p.values = {0.7f, 0.6f, 0.5f, 0.61f};
    TriStateMask m = detect::threshold_trimap(p, {0.6f, 0.6f});
    CHECK(m.at(0, 0) == 1);    // p > t_fg
    CHECK(m.at(0, 1) == -1);   // neither strict inequality at the shared threshold
    CHECK(m.at(0, 2) == 0);    // p < t_bg
    CHECK(m.at(0, 3) == 1);

    TriStateMask vac = detect::threshold_trimap(p, {1.0f, 0.0f});
    for (int8_t v : vac.labels) CHECK(v == -1);  // vacuous thresholds

    CHECK_THROWS_AS(detect::threshold_trimap(p, {0.4f, 0.6f}), std::invalid_argument);
}

TEST_CASE("threshold_trimap partitions pixels and is monotone in t_fg") {
    Rng rng(1);
    ProbabilityMap p(16, 16);
    for (float& v : p.values) v = static_cast<float>(rng.uniform());
    TriStateMask lo = detect::threshold_trimap(p, {0.5f, 0.3f});
    TriStateMask hi = detect::threshold_trimap(p, {0.7f, 0.3f});
    for (size_t i = 0; i < p.values.size(); ++i) {
        CHECK((lo.labels[i] == 1 || lo.labels[i] == 0 || lo.labels[i] == -1));
        if (hi.labels[i] == 1) CHECK(lo.labels[i] == 1);  // raising t_fg never adds foreground
    }
}

TEST_CASE("local_maxima constant map is empty") {
    ProbabilityMap p(8, 8, 0.9f);
    CHECK(detect::local_maxima(p, {2, 0.f}).empty());
}

TEST_CASE("local_maxima unique peak") {
    ProbabilityMap p(5, 5, 0.1f);
    p.at(2, 2) = 0.9f;
    PointSet pts = detect::local_maxima(p, {2, 0.f});
    REQUIRE(pts.size() == 1);
    CHECK(pts.points[0] == Point{2, 2});
}

TEST_CASE("local_maxima respects the probability floor") {
    ProbabilityMap p(5, 5, 0.1f);
    p.at(2, 2) = 0.4f;
    CHECK(detect::local_maxima(p, {2, 0.5f}).empty());
    CHECK(detect::local_maxima(p, {2, 0.3f}).size() == 1);
}

TEST_CASE("local_maxima equals the brute-force window scan on random maps") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        ProbabilityMap p(32, 32);
        for (float& v : p.values) v = static_cast<float>(rng.uniform());
        PointSet fast = detect::local_maxima(p, {3, 0.f});
        PointSet slow = oracles::local_maxima_oracle(p, 3, 0.f);
        REQUIRE(fast.size() == slow.size());
        for (size_t i = 0; i < fast.size(); ++i) CHECK(fast.points[i] == slow.points[i]);
    }
}

TEST_CASE("local_maxima points are Chebyshev-separated by more than the radius") {
    Rng rng(3);
    ProbabilityMap p(24, 24);
    for (float& v : p.values) v = static_cast<float>(rng.uniform());
    const int radius = 4;
    PointSet pts = detect::local_maxima(p, {radius, 0.f});
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j) {
            const int d = std::max(std::abs(pts.points[i].row - pts.points[j].row),
                                   std::abs(pts.points[i].col - pts.points[j].col));
            CHECK(d > radius);
        }
}

TEST_CASE("voronoi_labels single seed") {
    PointSet pts;
    pts.points = {{4, 4}};
    TriStateMask m = detect::voronoi_labels(pts, 9, 9, 2);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) {
            CHECK(m.at(r, c) != 0);  // no edges in a single-cell diagram
            const int d2 = (r - 4) * (r - 4) + (c - 4) * (c - 4);
            if (d2 <= 4) CHECK(m.at(r, c) == 1);
            else CHECK(m.at(r, c) == -1);
        }
}

TEST_CASE("voronoi_labels two seeds: edge on the perpendicular bisector") {
    PointSet pts;
    pts.points = {{2, 2}, {2, 6}};
    TriStateMask m = detect::voronoi_labels(pts, 5, 9, 0);
    for (int r = 0; r < 5; ++r) {
        CHECK(m.at(r, 4) == 0);  // column 4 is equidistant
        for (int c = 0; c < 9; ++c)
            if (c != 4) CHECK(m.at(r, c) != 0);
    }
    // pure-point seeds label exactly the seed pixels foreground
    CHECK(m.at(2, 2) == 1);
    CHECK(m.at(2, 6) == 1);
}

TEST_CASE("voronoi_labels random diagrams match the exhaustive nearest-seed scan") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        PointSet pts;
        std::set<std::pair<int, int>> seen;
        const int n = rng.uniform_int(5, 20);
        while (static_cast<int>(pts.size()) < n) {
            Point p{rng.uniform_int(0, 63), rng.uniform_int(0, 63)};
            if (seen.insert({p.row, p.col}).second) pts.points.push_back(p);
        }
        TriStateMask m = detect::voronoi_labels(pts, 64, 64, 2);
        std::vector<int32_t> cells = detect::voronoi_cells(pts, 64, 64);
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c) {
                auto [dist, ids] = oracles::nearest_seeds(pts, r, c);
                if (m.at(r, c) == -1) {
                    // ignored pixel: interior of a unique nearest-seed cell
                    REQUIRE(ids.size() == 1);
                    CHECK(cells[static_cast<size_t>(r) * 64 + c] == ids[0]);
                } else if (m.at(r, c) == 0) {
                    // edge: tie, or closed 4-neighborhood spans >= 2 cells
                    std::set<int> span(ids.begin(), ids.end());
                    const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
                    for (int i = 0; i < 4; ++i) {
                        const int nr = r + dr[i], nc = c + dc[i];
                        if (nr < 0 || nr >= 64 || nc < 0 || nc >= 64) continue;
                        auto [nd, nids] = oracles::nearest_seeds(pts, nr, nc);
                        if (nids.size() == 1) span.insert(nids[0]);
                    }
                    CHECK(span.size() >= 2);
                }
            }
    }
}

TEST_CASE("voronoi_labels edge set invariant under seed permutation") {
    Rng rng(5);
    PointSet pts;
    std::set<std::pair<int, int>> seen;
    while (pts.size() < 8) {
        Point p{rng.uniform_int(0, 31), rng.uniform_int(0, 31)};
        if (seen.insert({p.row, p.col}).second) pts.points.push_back(p);
    }
    TriStateMask a = detect::voronoi_labels(pts, 32, 32, 2);
    PointSet reversed;
    reversed.points.assign(pts.points.rbegin(), pts.points.rend());
    TriStateMask b = detect::voronoi_labels(reversed, 32, 32, 2);
    CHECK(a.labels == b.labels);
}

TEST_CASE("voronoi_labels each non-edge region contains exactly one seed") {
    Rng rng(6);
    PointSet pts;
    // well separated seeds so cells are non-degenerate
    while (pts.size() < 6) {
        Point p{rng.uniform_int(3, 44), rng.uniform_int(3, 44)};
        bool ok = true;
        for (const Point& q : pts.points)
            ok = ok && (std::abs(p.row - q.row) + std::abs(p.col - q.col) > 12);
        if (ok) pts.points.push_back(p);
    }
    TriStateMask m = detect::voronoi_labels(pts, 48, 48, 0);
    BinaryMask non_edge(48, 48);
    for (size_t i = 0; i < m.labels.size(); ++i) non_edge.values[i] = m.labels[i] != 0;
    InstanceMap regions = connected_components(non_edge, 4);
    std::vector<int> seeds_per_region(regions.max_id() + 1, 0);
    for (const Point& p : pts.points) ++seeds_per_region[regions.at(p.row, p.col)];
    int populated = 0;
    for (size_t i = 1; i < seeds_per_region.size(); ++i) {
        if (seeds_per_region[i] > 0) {
            ++populated;
            CHECK(seeds_per_region[i] == 1);
        }
    }
    CHECK(populated == static_cast<int>(pts.size()));
}

TEST_CASE("voronoi_labels rejects empty and out-of-bounds point sets") {
    CHECK_THROWS_AS(detect::voronoi_labels({}, 8, 8), std::invalid_argument);
    PointSet bad;
    bad.points = {{9, 3}};
    CHECK_THROWS_AS(detect::voronoi_labels(bad, 8, 8), std::invalid_argument);
}

TEST_CASE("train_ndn rejects all-ignore masks and misaligned inputs") {
    data::SynthConfig sc;
    sc.image_size = 32;
    sc.nuclei_min = sc.nuclei_max = 3;
    sc.radius_min = 3;
    sc.radius_max = 5;
    sc.seed = 50;
    auto sample = data::synth_nuclei(sc);

    detect::SegTrainConfig cfg;
    cfg.epochs = 1;

    TriStateMask all_ignore(32, 32, -1);
    CHECK_THROWS_WITH_AS(detect::train_ndn({sample.image}, {all_ignore}, cfg),
                         doctest::Contains("all-ignore"), std::invalid_argument);

    TriStateMask wrong_shape(16, 16, 0);
    CHECK_THROWS_AS(detect::train_ndn({sample.image}, {wrong_shape}, cfg),
                    std::invalid_argument);
    CHECK_THROWS_AS(detect::train_ndn({}, {}, cfg), std::invalid_argument);
}

TEST_CASE("train_ndn loss decreases and identical seeds reproduce the curve") {
    std::vector<RasterImage> imgs;
    std::vector<TriStateMask> masks;
    for (int i = 0; i < 8; ++i) {
        data::SynthConfig sc;
        sc.image_size = 32;
        sc.nuclei_min = 2;
        sc.nuclei_max = 4;
        sc.radius_min = 3;
        sc.radius_max = 5;
        sc.seed = 60 + i;
        auto s = data::synth_nuclei(sc);
        imgs.push_back(s.image);
        TriStateMask m(32, 32, 0);
        for (size_t k = 0; k < m.labels.size(); ++k)
            if (s.instances.labels[k] > 0) m.labels[k] = 1;
        masks.push_back(m);
    }
    detect::SegTrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e-3;
    cfg.seed = 3;
    nn::Checkpoint a = detect::train_ndn(imgs, masks, cfg);
    REQUIRE(a.losses.size() == 4);
    CHECK(a.losses.back() < a.losses.front());

    nn::Checkpoint b = detect::train_ndn(imgs, masks, cfg);
    CHECK(a.losses == b.losses);

    nn::UNet net = a.to_unet();
    ProbabilityMap prob = detect::predict_probability(net, imgs[0]);
    for (float v : prob.values) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }
    ProbabilityMap again = detect::predict_probability(net, imgs[0]);
    CHECK(prob.values == again.values);
}

}  // TEST_SUITE detect
