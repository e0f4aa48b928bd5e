#pragma once

// Structured pipeline configuration: documented defaults, strict schema
// validation (unknown keys rejected), dotted-path overrides, and FNV-1a
// content hashing for artifact addressing.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace nuc::config {

// Raised for malformed configuration (CLI exit code 1).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json default_config();

// Merge file (optional) and "section.key=value" overrides onto the defaults,
// validate against the default schema, then resolve profile-dependent
// defaults (pseudo.beta, metrics.match_radius).
nlohmann::json resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides);

// 16-hex-digit FNV-1a over the canonical (sorted-key) JSON dump.
std::string hash_json(const nlohmann::json& j);

}  // namespace nuc::config
