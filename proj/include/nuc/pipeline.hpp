#pragma once

// Stage orchestration: content-addressed artifact directories, up-to-date
// skipping, the full stage graph, and hyperparameter sweeps.
//
// Each stage writes into <out_root>/<stage>/<hash>/ where the hash chains the
// stage's own config subset with its upstream stage hashes, so changing one
// knob re-runs only the affected suffix of the pipeline.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "nuc/core.hpp"

namespace nuc::pipeline {

namespace fs = std::filesystem;

enum class Stage {
    synth_data,
    pretrain,
    activate,
    pseudomask,
    train_ndn,
    detect,
    voronoi,
    train_nsn,
    segment,
    evaluate,
};

Stage stage_from_string(const std::string& s);
std::string to_string(Stage s);
std::vector<Stage> stage_order();  // dependency order

struct StageResult {
    fs::path dir;
    std::string hash;
    bool skipped = false;  // artifacts were already up to date
};

class Pipeline {
public:
    Pipeline(nlohmann::json cfg, fs::path out_root);

    const nlohmann::json& cfg() const { return cfg_; }
    std::string stage_hash(Stage stage) const;
    fs::path stage_dir(Stage stage) const;
    std::string dataset_hash() const;
    fs::path dataset_dir() const;  // synthetic: stage artifact; otherwise data.root

    // Runs one stage. Missing upstream artifacts raise with a message naming
    // the producing stage. Re-running with an identical hash is skipped.
    StageResult run(Stage stage);

    // Runs every stage in dependency order (synth-data only for the
    // synthetic profile).
    std::vector<StageResult> run_all();

private:
    nlohmann::json cfg_;
    fs::path out_;
    uint32_t seed_ = 0;

    fs::path require_upstream(Stage stage) const;
    void write_stage_json(Stage stage, const fs::path& dir, double wall_ms) const;

    void do_synth_data(const fs::path& dir);
    void do_pretrain(const fs::path& dir);
    void do_activate(const fs::path& dir);
    void do_pseudomask(const fs::path& dir);
    void do_train_ndn(const fs::path& dir);
    void do_detect(const fs::path& dir);
    void do_voronoi(const fs::path& dir);
    void do_train_nsn(const fs::path& dir);
    void do_segment(const fs::path& dir);
    void do_evaluate(const fs::path& dir);
};

struct SweepRow {
    std::string value;
    bool ok = false;
    std::string error;
    std::map<std::string, double> metrics;
};

struct SweepResult {
    fs::path dir;
    std::vector<SweepRow> rows;
};

// parameter in {beta, lambda, layer, proxy-task}. eval_at "full" runs the
// whole chain and reads the evaluation summary; "pseudomask" stops after
// pseudo-mask generation and scores the masks against ground truth directly.
// Failures are recorded per value; surviving rows are still reported.
SweepResult run_sweep(const nlohmann::json& cfg, const fs::path& out_root,
                      const std::string& parameter, const std::vector<std::string>& values,
                      const std::string& eval_at = "full");

// Summary metrics of an evaluate stage ("metric,value" CSV).
std::map<std::string, double> read_summary_csv(const fs::path& path);

}  // namespace nuc::pipeline
