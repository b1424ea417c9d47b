#pragma once

#include <optional>
#include <string>
#include <vector>

#include "estas/byol.hpp"
#include "estas/config.hpp"
#include "estas/dataset.hpp"
#include "estas/distill.hpp"
#include "estas/moco.hpp"
#include "estas/probe_eval.hpp"

namespace estas {

struct MultiTargetEntry {
    std::size_t row = 0;
    std::size_t col = 0;
    int target_class = 0;
    std::size_t sample_index = 0;
};

struct ExperimentConfig {
    // dataset
    bool use_cifar = false;
    SynthSpec synth;
    std::string cifar_train;
    std::string cifar_test;

    // method & attack shape
    std::string method = "byol";  // byol | moco
    bool attack = true;
    PoisonMode mode = PoisonMode::Consistent;
    LossVariant variant = LossVariant::Cascade;

    // trigger & target selection
    std::uint64_t trigger_seed = 7;
    std::size_t trigger_size = 6;
    std::optional<std::size_t> trigger_row;  // default: bottom-right, 1px margin
    std::optional<std::size_t> trigger_col;
    int target_class = 0;
    std::size_t target_sample_index = 0;
    std::vector<MultiTargetEntry> multi;

    // training
    std::size_t epochs = 30;
    std::size_t batch = 25;
    double lr = 0.0;  // 0 = per-method default
    double momentum = 0.9;
    double ema_start = 0.99;
    double ema_end = 1.0;
    double moco_momentum_rate = 0.99;
    double temperature = 0.2;
    std::size_t queue_capacity = 256;
    double lambda10 = 1.0;
    double lambda20 = 1.0;

    // augmentation
    double crop_lo = 0.6;
    double crop_hi = 1.0;
    double flip_prob = 0.5;
    double jitter = 0.1;

    // defense
    double defense_fraction = 0.25;
    std::size_t defense_epochs = 40;

    ProbeConfig probe;
    std::uint64_t seed = 1;
    std::string fingerprint;  // of the source key-value config
};

ExperimentConfig experiment_from_config(const KeyValueConfig& kv);

struct ResultRecord {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string method = "byol";
    std::string poison_mode = "consistent";
    std::string loss_variant = "cascade";
    double acc = 0.0;
    double asr = 0.0;
    std::optional<int> mistaken;
    std::vector<double> per_target_asr;  // multi-target runs
    double wall_seconds = 0.0;  // measured; logged to console, not persisted
    std::size_t sample_index = 0;
};

// Dataset -> encoder training (clean or attacked) -> probe -> ACC/ASR ->
// artifacts (checkpoint, loss trace, representation dump, report).
ResultRecord run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Four runs differing only in the loss variant, shared seed.
std::vector<ResultRecord> run_ablation(const ExperimentConfig& base,
                                       const std::string& out_dir);

struct StabilitySummary {
    std::vector<ResultRecord> rows;
    double min_asr = 0.0;
    double median_asr = 0.0;
    std::size_t mistaken_none = 0;
};

// k runs, each with a different single target sample of the same class.
StabilitySummary run_stability_sweep(const ExperimentConfig& cfg, int target_class,
                                     std::size_t samples, const std::string& out_dir);

struct MultiTargetResult {
    // asr[i][j]: trigger at placement i evaluated against target class j.
    std::vector<std::vector<double>> asr;
    std::vector<ResultRecord> records;  // one per placement, own-target ASR
};

MultiTargetResult run_multitarget(const ExperimentConfig& cfg, const std::string& out_dir);

struct DefenseOutcome {
    EvalReport teacher;
    EvalReport student;
    double subset_fraction = 0.0;
};

// Attacked teacher, distilled student, both probed on identical splits.
DefenseOutcome run_defense(const ExperimentConfig& cfg, const std::string& out_dir);

// results.csv + results.json; byte-stable across identical runs.
void emit_report(const std::vector<ResultRecord>& records, const std::string& dir);

// (N, N_t, PN, AQ_exact, AQ_mc, stderr) CSV over the configured sweep.
void run_aq_sweep(const KeyValueConfig& kv, const std::string& out_dir);

}  // namespace estas
