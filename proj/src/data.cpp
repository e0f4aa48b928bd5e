#include "nuc/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <sstream>

#include "nuc/io.hpp"

namespace nuc::data {

DatasetProfile profile_from_string(const std::string& s) {
    if (s == "mask-style") return DatasetProfile::mask_style;
    if (s == "point-style") return DatasetProfile::point_style;
    if (s == "synthetic") return DatasetProfile::synthetic;
    throw std::invalid_argument("unknown dataset profile: " + s);
}

std::string to_string(DatasetProfile p) {
    switch (p) {
        case DatasetProfile::mask_style: return "mask-style";
        case DatasetProfile::point_style: return "point-style";
        case DatasetProfile::synthetic: return "synthetic";
    }
    return "?";
}

std::vector<const ManifestEntry*> DatasetManifest::split(const std::string& name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.split == name) out.push_back(&e);
    return out;
}

DatasetManifest load_manifest(const fs::path& root, DatasetProfile profile) {
    DatasetManifest manifest;
    manifest.root = root;
    manifest.profile = profile;
    std::vector<std::string> problems;

    const bool want_masks =
        profile == DatasetProfile::mask_style || profile == DatasetProfile::synthetic;
    const bool want_points =
        profile == DatasetProfile::point_style || profile == DatasetProfile::synthetic;

    for (const char* split : {"train", "val", "test"}) {
        const fs::path images_dir = root / split / "images";
        if (!fs::exists(images_dir)) continue;
        std::vector<fs::path> files;
        for (const auto& de : fs::directory_iterator(images_dir))
            if (de.is_regular_file()) files.push_back(de.path());
        std::sort(files.begin(), files.end());

        for (const fs::path& img_path : files) {
            ManifestEntry entry;
            entry.image_path = img_path;
            entry.split = split;
            RasterImage img;
            try {
                img = io::read_image(img_path);
            } catch (const std::exception& e) {
                problems.push_back(e.what());
                continue;
            }
            entry.height = img.height;
            entry.width = img.width;

            const std::string stem = img_path.stem().string();
            if (want_masks) {
                entry.mask_path = root / split / "masks" / (stem + ".pgm");
                if (!fs::exists(entry.mask_path)) {
                    problems.push_back("missing mask for " + img_path.string());
                } else {
                    try {
                        InstanceMap gt = io::read_instance_map(entry.mask_path);
                        if (gt.height != img.height || gt.width != img.width)
                            problems.push_back("mask dimensions mismatch image: " +
                                               entry.mask_path.string());
                    } catch (const std::exception& e) {
                        problems.push_back(e.what());
                    }
                }
            }
            if (want_points) {
                entry.points_path = root / split / "points" / (stem + ".csv");
                if (!fs::exists(entry.points_path)) {
                    problems.push_back("missing points for " + img_path.string());
                } else {
                    try {
                        io::read_points_csv(entry.points_path, img.height, img.width);
                    } catch (const std::exception& e) {
                        problems.push_back(e.what());
                    }
                }
            }
            manifest.entries.push_back(std::move(entry));
        }
    }

    if (!problems.empty()) {
        std::ostringstream ss;
        ss << "dataset validation failed (" << problems.size() << " problems):";
        for (const auto& p : problems) ss << "\n  - " << p;
        throw std::runtime_error(ss.str());
    }
    if (manifest.entries.empty())
        std::cerr << "warning: empty dataset manifest under " << root << "\n";
    return manifest;
}

std::vector<Patch> extract_patches(const RasterImage& image, int patch_size, int stride) {
    if (patch_size <= 0 || stride <= 0)
        throw std::invalid_argument("extract_patches: bad patch/stride");
    if (patch_size > image.height || patch_size > image.width)
        throw std::invalid_argument("extract_patches: patch exceeds image size");

    auto reflect = [](int i, int n) {
        if (i >= n) i = 2 * n - 1 - i;
        return i;
    };
    // offsets 0, stride, ... up to the first offset whose patch covers the
    // trailing edge; trailing patches reflect-pad past the border
    auto last_offset = [&](int extent) {
        if (extent <= patch_size) return 0;
        return (extent - patch_size + stride - 1) / stride * stride;
    };
    std::vector<Patch> out;
    for (int r0 = 0; r0 <= last_offset(image.height); r0 += stride) {
        for (int c0 = 0; c0 <= last_offset(image.width); c0 += stride) {
            Patch p;
            p.row_off = r0;
            p.col_off = c0;
            p.image = RasterImage(patch_size, patch_size, image.channels);
            for (int r = 0; r < patch_size; ++r)
                for (int c = 0; c < patch_size; ++c)
                    for (int ch = 0; ch < image.channels; ++ch)
                        p.image.at(r, c, ch) =
                            image.at(reflect(r0 + r, image.height), reflect(c0 + c, image.width), ch);
            out.push_back(std::move(p));
        }
    }
    return out;
}

RasterImage stitch_patches(const std::vector<Patch>& patches, int height, int width) {
    if (patches.empty()) throw std::invalid_argument("stitch_patches: no patches");
    RasterImage out(height, width, patches[0].image.channels);
    for (const Patch& p : patches)
        for (int r = 0; r < p.image.height; ++r)
            for (int c = 0; c < p.image.width; ++c) {
                const int rr = p.row_off + r, cc = p.col_off + c;
                if (rr >= height || cc >= width) continue;
                for (int ch = 0; ch < out.channels; ++ch)
                    out.at(rr, cc, ch) = p.image.at(r, c, ch);
            }
    return out;
}

// ---- synthetic generator ----------------------------------------------------

namespace {

struct Nucleus {
    double row, col;    // center
    double a, b;        // semi-axes
    double cos_t, sin_t;
    double mean_radius() const { return 0.5 * (a + b); }
};

// normalized elliptical radius of (r,c) about the nucleus
double rho(const Nucleus& nuc, double r, double c) {
    const double dr = r - nuc.row, dc = c - nuc.col;
    const double x = dc * nuc.cos_t + dr * nuc.sin_t;
    const double y = -dc * nuc.sin_t + dr * nuc.cos_t;
    return std::sqrt((x / nuc.a) * (x / nuc.a) + (y / nuc.b) * (y / nuc.b));
}

// coarse value noise: random 8x8 grid, bilinear interpolation
std::vector<float> value_noise(int h, int w, double amplitude, Rng& rng) {
    const int gn = 8;
    std::vector<double> grid(gn * gn);
    for (double& g : grid) g = rng.uniform(-amplitude, amplitude);
    std::vector<float> out(static_cast<size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double fr = h > 1 ? double(r) / (h - 1) * (gn - 1) : 0.0;
            const double fc = w > 1 ? double(c) / (w - 1) * (gn - 1) : 0.0;
            const int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
            const int r1 = std::min(r0 + 1, gn - 1), c1 = std::min(c0 + 1, gn - 1);
            const double wr = fr - r0, wc = fc - c0;
            const double v = (1 - wr) * ((1 - wc) * grid[r0 * gn + c0] + wc * grid[r0 * gn + c1]) +
                             wr * ((1 - wc) * grid[r1 * gn + c0] + wc * grid[r1 * gn + c1]);
            out[static_cast<size_t>(r) * w + c] = static_cast<float>(v);
        }
    return out;
}

// H&E-like palette: light background, dark violet nuclei. The red channels sit
// close together so the heat-map red prior stays decisive after fusion.
constexpr float kBackground[3] = {0.56f, 0.62f, 0.64f};
constexpr float kNucleusDark[3] = {0.525f, 0.20f, 0.55f};

}  // namespace

SynthSample synth_nuclei(const SynthConfig& cfg) {
    if (cfg.image_size <= 0 || cfg.nuclei_min > cfg.nuclei_max || cfg.radius_min > cfg.radius_max ||
        cfg.overlap_fraction < 0.0 || cfg.overlap_fraction >= 1.0)
        throw std::invalid_argument("synth_nuclei: invalid config");

    const int size = cfg.image_size;
    Rng rng(cfg.seed);

    const int target = cfg.nuclei_min == cfg.nuclei_max
                           ? cfg.nuclei_min
                           : rng.uniform_int(cfg.nuclei_min, cfg.nuclei_max);

    std::vector<Nucleus> nuclei;
    for (int restart = 0; restart <= 5 && static_cast<int>(nuclei.size()) < target; ++restart) {
        if (restart > 0) nuclei.clear();
        bool stuck = false;
        while (static_cast<int>(nuclei.size()) < target && !stuck) {
            bool placed = false;
            for (int attempt = 0; attempt < 500; ++attempt) {
                Nucleus nuc;
                nuc.a = rng.uniform(cfg.radius_min, cfg.radius_max);
                nuc.b = nuc.a * rng.uniform(0.75, 1.0);
                const double theta = rng.uniform(0.0, 3.14159265358979323846);
                nuc.cos_t = std::cos(theta);
                nuc.sin_t = std::sin(theta);
                const int margin = static_cast<int>(std::ceil(nuc.a)) + 1;
                if (2 * margin >= size - 1) continue;
                nuc.row = rng.uniform_int(margin, size - 1 - margin);
                nuc.col = rng.uniform_int(margin, size - 1 - margin);
                bool ok = true;
                for (const Nucleus& other : nuclei) {
                    const double d = std::hypot(nuc.row - other.row, nuc.col - other.col);
                    const double lim =
                        (1.0 - cfg.overlap_fraction) * (nuc.mean_radius() + other.mean_radius());
                    if (d < lim) { ok = false; break; }
                }
                if (ok) {
                    nuclei.push_back(nuc);
                    placed = true;
                    break;
                }
            }
            if (!placed) stuck = true;
        }
    }
    if (static_cast<int>(nuclei.size()) < target)
        throw std::runtime_error("synth_nuclei: infeasible packing for requested nuclei count");

    SynthSample sample;
    sample.image = RasterImage(size, size, 3);
    sample.instances = InstanceMap(size, size);

    std::vector<float> texture = value_noise(size, size, 0.04, rng);

    // per-nucleus color jitter
    std::vector<std::array<float, 3>> colors(nuclei.size());
    for (size_t i = 0; i < nuclei.size(); ++i)
        for (int ch = 0; ch < 3; ++ch) {
            const float base = kBackground[ch] +
                               static_cast<float>(cfg.intensity_contrast) *
                                   (kNucleusDark[ch] - kBackground[ch]);
            colors[i][ch] = base + static_cast<float>(rng.uniform(-0.04, 0.04));
        }

    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            float px[3];
            for (int ch = 0; ch < 3; ++ch)
                px[ch] = kBackground[ch] + texture[static_cast<size_t>(r) * size + c];

            double best_rho = 2.0;
            int best_id = 0;
            for (size_t i = 0; i < nuclei.size(); ++i) {
                const double q = rho(nuclei[i], r, c);
                if (q < best_rho) {
                    best_rho = q;
                    best_id = static_cast<int>(i) + 1;
                }
                if (q <= 1.0) {
                    // soft edge over rho in [0.8, 1.0]
                    double t = std::min(1.0, std::max(0.0, (1.0 - q) / 0.2));
                    t = t * t * (3.0 - 2.0 * t);
                    for (int ch = 0; ch < 3; ++ch)
                        px[ch] = static_cast<float>(px[ch] * (1.0 - t) + colors[i][ch] * t);
                }
            }
            // ground truth at the half-blend boundary (rho <= 0.9)
            if (best_rho <= 0.9) sample.instances.at(r, c) = best_id;

            for (int ch = 0; ch < 3; ++ch) {
                float v = px[ch] + static_cast<float>(rng.normal() * cfg.noise_sigma);
                sample.image.at(r, c, ch) = std::min(1.f, std::max(0.f, v));
            }
        }

    for (const Nucleus& nuc : nuclei)
        sample.centers.points.push_back(
            {static_cast<int>(std::lround(nuc.row)), static_cast<int>(std::lround(nuc.col))});
    return sample;
}

DatasetManifest write_synthetic_dataset(const fs::path& root, const SynthConfig& base,
                                        int count_train, int count_val, int count_test) {
    struct SplitSpec { const char* name; int count; };
    const SplitSpec splits[] = {{"train", count_train}, {"val", count_val}, {"test", count_test}};
    uint32_t index = 0;
    for (const auto& [name, count] : splits) {
        if (count <= 0) continue;
        fs::create_directories(root / name / "images");
        fs::create_directories(root / name / "masks");
        fs::create_directories(root / name / "points");
        for (int i = 0; i < count; ++i, ++index) {
            SynthConfig cfg = base;
            cfg.seed = base.seed * 2654435761u + index * 40503u + 7u;
            SynthSample s = synth_nuclei(cfg);
            char stem[32];
            std::snprintf(stem, sizeof stem, "img_%04d", i);
            io::write_image(root / name / "images" / (std::string(stem) + ".ppm"), s.image);
            io::write_instance_map(root / name / "masks" / (std::string(stem) + ".pgm"),
                                   s.instances);
            io::write_points_csv(root / name / "points" / (std::string(stem) + ".csv"), s.centers);
        }
    }
    return load_manifest(root, DatasetProfile::synthetic);
}

}  // namespace nuc::data
