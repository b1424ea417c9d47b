// Experiment runner: clean baselines, trojaned encoder training, ablations,
// stability and multi-target sweeps, the distillation defense, and query
// cost tables. Configs are flat "key = value" files; see README.
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "estas/config.hpp"
#include "estas/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::int64_t seed = -1;  // -1: use the config's seed
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "config file path")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the config seed");
}

estas::ExperimentConfig load_experiment(const CommonArgs& args) {
    estas::KeyValueConfig kv = estas::KeyValueConfig::parse_file(args.config_path);
    if (args.seed >= 0) kv.set("seed", std::to_string(args.seed));
    return estas::experiment_from_config(kv);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trojaned self-supervised encoder laboratory"};
    app.require_subcommand(1);

    CommonArgs run_args, ablation_args, stability_args, multi_args, defend_args, aq_args;

    CLI::App* cmd_run = app.add_subcommand("run", "single experiment");
    add_common(cmd_run, run_args);

    CLI::App* cmd_ablation = app.add_subcommand("ablation", "loss-variant ablation");
    add_common(cmd_ablation, ablation_args);

    CLI::App* cmd_stability =
        app.add_subcommand("stability", "single-sample stability sweep");
    add_common(cmd_stability, stability_args);
    std::int64_t stability_samples = 10;
    cmd_stability->add_option("--samples", stability_samples, "target samples to try");

    CLI::App* cmd_multi = app.add_subcommand("multitarget", "multi-placement attack");
    add_common(cmd_multi, multi_args);

    CLI::App* cmd_defend = app.add_subcommand("defend", "distillation defense");
    add_common(cmd_defend, defend_args);

    CLI::App* cmd_aq = app.add_subcommand("aq", "query-cost table");
    add_common(cmd_aq, aq_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            estas::ExperimentConfig cfg = load_experiment(run_args);
            estas::ResultRecord record = estas::run_experiment(cfg, run_args.out_dir);
            estas::emit_report({record}, run_args.out_dir);
        } else if (cmd_ablation->parsed()) {
            estas::ExperimentConfig cfg = load_experiment(ablation_args);
            auto records = estas::run_ablation(cfg, ablation_args.out_dir);
            estas::emit_report(records, ablation_args.out_dir);
        } else if (cmd_stability->parsed()) {
            estas::ExperimentConfig cfg = load_experiment(stability_args);
            if (stability_samples < 2) throw estas::ConfigError("--samples must be >= 2");
            auto summary = estas::run_stability_sweep(
                cfg, cfg.target_class, static_cast<std::size_t>(stability_samples),
                stability_args.out_dir);
            estas::emit_report(summary.rows, stability_args.out_dir);
            std::cout << "[stability] min_asr=" << summary.min_asr
                      << " median_asr=" << summary.median_asr
                      << " mistaken_none=" << summary.mistaken_none << "/"
                      << summary.rows.size() << "\n";
        } else if (cmd_multi->parsed()) {
            estas::ExperimentConfig cfg = load_experiment(multi_args);
            auto result = estas::run_multitarget(cfg, multi_args.out_dir);
            estas::emit_report(result.records, multi_args.out_dir);
        } else if (cmd_defend->parsed()) {
            estas::ExperimentConfig cfg = load_experiment(defend_args);
            estas::run_defense(cfg, defend_args.out_dir);
        } else if (cmd_aq->parsed()) {
            estas::KeyValueConfig kv =
                estas::KeyValueConfig::parse_file(aq_args.config_path);
            estas::run_aq_sweep(kv, aq_args.out_dir);
        }
    } catch (const estas::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "run aborted: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
