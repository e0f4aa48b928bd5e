// nucseg: label-free nuclei detection/segmentation pipeline driver.
//
// Stage subcommands (synth-data, pretrain, activate, pseudomask, train-ndn,
// detect, voronoi, train-nsn, segment, evaluate) plus hyperparameter sweeps.
// Exit codes: 0 ok, 1 configuration error, 2 runtime error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nuc/config.hpp"
#include "nuc/pipeline.hpp"

namespace {

std::filesystem::path output_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("NUCSEG_OUT")) return env;
    return "out";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"label-free nuclei detection and segmentation pipeline"};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> overrides;
    std::string out_flag;
    app.add_option("--config", config_file, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "override: section.key=value (repeatable)");
    app.add_option("--out", out_flag, "output root (default $NUCSEG_OUT or ./out)");

    const std::vector<std::string> stage_names = {
        "synth-data", "pretrain", "activate", "pseudomask", "train-ndn",
        "detect",     "voronoi",  "train-nsn", "segment",   "evaluate"};
    for (const auto& name : stage_names)
        app.add_subcommand(name, "run the " + name + " stage");
    auto* all_cmd = app.add_subcommand("run-all", "run every stage in order");

    auto* sweep_cmd = app.add_subcommand("sweep", "run a hyperparameter sweep");
    std::string sweep_param, sweep_eval_at = "full";
    std::vector<std::string> sweep_values;
    sweep_cmd->add_option("--param", sweep_param, "beta | lambda | layer | proxy-task")
        ->required();
    sweep_cmd->add_option("--values", sweep_values, "sweep values")->required()->delimiter(',');
    sweep_cmd->add_option("--eval-at", sweep_eval_at, "full | pseudomask");

    auto* config_cmd = app.add_subcommand("show-config", "print the resolved config and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        std::optional<std::filesystem::path> cfg_path;
        if (!config_file.empty()) cfg_path = config_file;
        nlohmann::json cfg = nuc::config::resolve_config(cfg_path, overrides);
        const auto out_root = output_root(out_flag);

        if (config_cmd->parsed()) {
            std::cout << cfg.dump(2) << "\n";
            return 0;
        }
        if (sweep_cmd->parsed()) {
            auto result = nuc::pipeline::run_sweep(cfg, out_root, sweep_param, sweep_values,
                                                   sweep_eval_at);
            std::cout << "sweep report: " << (result.dir / "sweep.csv").string() << "\n";
            bool all_ok = true;
            for (const auto& row : result.rows) all_ok = all_ok && row.ok;
            return all_ok ? 0 : 2;
        }
        nuc::pipeline::Pipeline pipeline(cfg, out_root);
        if (all_cmd->parsed()) {
            pipeline.run_all();
            return 0;
        }
        for (const auto& name : stage_names)
            if (app.get_subcommand(name)->parsed()) {
                pipeline.run(nuc::pipeline::stage_from_string(name));
                return 0;
            }
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const nuc::config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
