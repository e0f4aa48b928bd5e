#include "nuc/config.hpp"

#include <fstream>

namespace nuc::config {

using nlohmann::json;

json default_config() {
    // Defaults follow the reference training recipe: similarity proxy task,
    // first-block activation maps, beta 2.5/4.0 by dataset profile, both
    // probability thresholds 0.6, lambda 0.5, Adam at 1e-4 for 100 epochs.
    return json{
        {"seed", 17},
        {"data",
         {{"profile", "synthetic"},
          {"root", "data"},
          {"synth",
           {{"image_size", 64},
            {"count_train", 200},
            {"count_val", 0},
            {"count_test", 50},
            {"nuclei_min", 8},
            {"nuclei_max", 12},
            {"radius_min", 4.0},
            {"radius_max", 6.0},
            {"intensity_contrast", 0.85},
            {"overlap_fraction", 0.15},
            {"noise_sigma", 0.02}}}}},
        {"ssl",
         {{"task", "similarity"},
          {"preset", "compact"},
          {"epochs", 100},
          {"learning_rate", 1e-4},
          {"batch_size", 8},
          {"temperature", 0.5},
          {"variance_reg", 1e-4},
          {"pretrained_path", ""},
          {"augment",
           {{"brightness", 0.2},
            {"contrast", 0.2},
            {"blur_sigma_max", 1.0},
            {"hflip", true},
            {"vflip", true}}}}},
        {"saliency", {{"layer", 1}, {"scalar", "embedding_norm"}}},
        {"pseudo",
         {{"beta", -1.0},  // -1 -> profile default (mask-style 2.5, point-style 4.0)
          {"middle_cluster", "ignore"},
          {"kmeans_max_iter", 50},
          {"kmeans_tol", 1e-4}}},
        {"detect",
         {{"epochs", 100},
          {"learning_rate", 1e-4},
          {"batch_size", 8},
          {"backbone", "compact"},
          {"t_fg", 0.6},
          {"t_bg", 0.6},
          {"peak_radius", 5},
          {"peak_min_prob", 0.5},
          {"seed_disk_radius", 2}}},
        {"segment",
         {{"epochs", 100},
          {"learning_rate", 1e-4},
          {"batch_size", 8},
          {"backbone", "compact"},
          {"lambda", 0.5},
          {"threshold", 0.5},
          {"supervision", "joint"}}},
        {"metrics",
         {{"match_radius", -1.0},  // -1 -> profile default (synthetic 5, otherwise 12)
          {"connectivity", 8}}}};
}

namespace {

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    if (a.is_object() && b.is_object()) return true;
    if (a.is_string() && b.is_string()) return true;
    if (a.is_boolean() && b.is_boolean()) return true;
    return false;
}

void merge_validated(json& base, const json& incoming, const std::string& prefix) {
    if (!incoming.is_object())
        throw ConfigError("config section '" + prefix + "' must be an object");
    for (auto it = incoming.begin(); it != incoming.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key: " + path);
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_validated(slot, it.value(), path);
        } else {
            if (!same_kind(slot, it.value()))
                throw ConfigError("config key '" + path + "' has wrong type");
            slot = it.value();
        }
    }
}

void apply_override(json& base, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be section.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value_str = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(value_str);
    } catch (const json::exception&) {
        value = value_str;  // bare strings need no quotes
    }

    json* slot = &base;
    size_t start = 0;
    std::string walked;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        walked = walked.empty() ? key : walked + "." + key;
        if (!slot->contains(key)) throw ConfigError("unknown config key: " + walked);
        slot = &(*slot)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (slot->is_object()) throw ConfigError("cannot assign to config section: " + path);
    if (!same_kind(*slot, value))
        throw ConfigError("config key '" + path + "' has wrong type");
    *slot = value;
}

}  // namespace

nlohmann::json resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides) {
    json cfg = default_config();
    if (file) {
        std::ifstream in(*file);
        if (!in) throw ConfigError("cannot open config file: " + file->string());
        json user;
        try {
            user = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        merge_validated(cfg, user, "");
    }
    for (const std::string& o : overrides) apply_override(cfg, o);

    // profile-dependent defaults
    const std::string profile = cfg["data"]["profile"];
    if (cfg["pseudo"]["beta"].get<double>() < 0.0)
        cfg["pseudo"]["beta"] = profile == "point-style" ? 4.0 : 2.5;
    if (cfg["metrics"]["match_radius"].get<double>() < 0.0)
        cfg["metrics"]["match_radius"] = profile == "synthetic" ? 5.0 : 12.0;
    return cfg;
}

std::string hash_json(const nlohmann::json& j) {
    const std::string s = j.dump();
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace nuc::config
