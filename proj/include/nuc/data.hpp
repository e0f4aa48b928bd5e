#pragma once

// Dataset ingestion (mask-style and point-style layouts), patch extraction,
// and a parameterized synthetic nuclei generator for desk-scale verification.
//
// Directory layout, shared by all profiles (absent splits are skipped):
//   root/{train,val,test}/images/<stem>.ppm
//   root/{train,val,test}/masks/<stem>.pgm    16-bit instance maps
//   root/{train,val,test}/points/<stem>.csv   "row,col" centroids

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nuc/core.hpp"

namespace nuc::data {

namespace fs = std::filesystem;

enum class DatasetProfile { mask_style, point_style, synthetic };

DatasetProfile profile_from_string(const std::string& s);
std::string to_string(DatasetProfile p);

struct ManifestEntry {
    fs::path image_path;
    fs::path mask_path;    // empty when the profile carries no masks
    fs::path points_path;  // empty when the profile carries no points
    std::string split;
    int height = 0, width = 0;
};

struct DatasetManifest {
    fs::path root;
    DatasetProfile profile = DatasetProfile::synthetic;
    std::vector<ManifestEntry> entries;

    std::vector<const ManifestEntry*> split(const std::string& name) const;
};

// Validates layout and ground truth (mask dimensions, point bounds). Missing
// or corrupt files raise with itemized diagnostics; an empty root yields an
// empty manifest with a warning.
DatasetManifest load_manifest(const fs::path& root, DatasetProfile profile);

struct Patch {
    RasterImage image;
    int row_off = 0, col_off = 0;
};

// Regular grid with reflect padding at the trailing edges.
std::vector<Patch> extract_patches(const RasterImage& image, int patch_size, int stride);

// Inverse of extract_patches on a non-overlapping grid.
RasterImage stitch_patches(const std::vector<Patch>& patches, int height, int width);

struct SynthConfig {
    int image_size = 64;
    int nuclei_min = 8, nuclei_max = 12;
    double radius_min = 4.0, radius_max = 6.0;
    double intensity_contrast = 0.85;  // 0 = invisible, 1 = full palette contrast
    double overlap_fraction = 0.15;    // allowed center-distance deficit
    double noise_sigma = 0.02;
    uint32_t seed = 0;
};

struct SynthSample {
    RasterImage image;
    InstanceMap instances;
    PointSet centers;
};

// Elliptical nuclei with soft edges on a lightly textured background,
// deterministic per seed. Throws when the requested packing is infeasible.
SynthSample synth_nuclei(const SynthConfig& cfg);

// Writes a synthetic dataset in the standard layout and returns its manifest.
DatasetManifest write_synthetic_dataset(const fs::path& root, const SynthConfig& base,
                                        int count_train, int count_val, int count_test);

}  // namespace nuc::data
