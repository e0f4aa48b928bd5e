#pragma once

// Lossless raster I/O (binary NetPBM: 8-bit PPM for color, 8/16-bit PGM for
// single channel) and point-set CSV with header "row,col".
//
// Tri-state masks use the 8-bit palette {0 -> 0, 1 -> 255, -1 -> 128}.
// Instance maps and probability/activation maps use 16-bit PGM.

#include <filesystem>
#include <string>

#include "nuc/core.hpp"

namespace nuc::io {

namespace fs = std::filesystem;

// Every writer takes an optional comment (the producing config hash); PNM
// files carry it as a native '#' header comment, CSVs as a leading '#' line.

// 3-channel images as P6 PPM (8-bit). 1-channel images as P5 PGM.
void write_image(const fs::path& path, const RasterImage& image,
                 const std::string& comment = "");
RasterImage read_image(const fs::path& path);

void write_tristate(const fs::path& path, const TriStateMask& mask,
                    const std::string& comment = "");
TriStateMask read_tristate(const fs::path& path);

// 16-bit single channel, big-endian per NetPBM.
void write_instance_map(const fs::path& path, const InstanceMap& map,
                        const std::string& comment = "");
InstanceMap read_instance_map(const fs::path& path);

// Probability/activation rasters scaled by 65535 into 16-bit PGM.
void write_map16(const fs::path& path, const ProbabilityMap& map,
                 const std::string& comment = "");
ProbabilityMap read_map16(const fs::path& path);

void write_points_csv(const fs::path& path, const PointSet& points,
                      const std::string& comment = "");
// max_row/max_col < 0 disables the bounds check.
PointSet read_points_csv(const fs::path& path, int max_row = -1, int max_col = -1);

void write_binary_mask(const fs::path& path, const BinaryMask& mask,
                       const std::string& comment = "");
BinaryMask read_binary_mask(const fs::path& path);

// Write-to-temp-then-rename helper for atomic artifact emission.
void write_text_atomic(const fs::path& path, const std::string& content);

}  // namespace nuc::io
