#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "estas/augment.hpp"
#include "estas/dataset.hpp"
#include "estas/model.hpp"

namespace estas {

struct ProbeConfig {
    std::size_t hidden = 32;
    double lr = 0.01;
    std::size_t epochs = 100;
    // The trainers align representations by cosine, so the probe reads
    // unit-normalized representations by default.
    bool normalize_inputs = true;
};

// Classification head trained on frozen encoder outputs: two affine layers
// with a rectifier between them.
struct Probe {
    MlpHead head;
    std::size_t num_classes = 0;
    bool normalize_inputs = true;
};

// Cross-entropy on precomputed representations; full-batch SGD.
Probe train_probe_on_reps(const std::vector<Tensor>& reps, const std::vector<int>& labels,
                          std::size_t num_classes, const ProbeConfig& config,
                          std::uint64_t seed);

// Probe-labeled split through trigger-free inference views. The encoder is
// read-only throughout.
Probe train_probe(const TinyEncoder& encoder, const LabeledDataset& dataset,
                  const AugmentationPolicy& policy, const ProbeConfig& config,
                  std::uint64_t seed);

// Argmax with ties broken towards the lowest class id.
int probe_predict(const Probe& probe, const Tensor& representation);

double eval_acc(const TinyEncoder& encoder, const Probe& probe,
                const LabeledDataset& dataset, const AugmentationPolicy& policy);

struct AsrResult {
    double asr = 0.0;
    std::vector<std::uint64_t> histogram;  // triggered predictions per class
    std::size_t total = 0;                 // evaluated (non-target) images
};

// Triggered inference views over all test images whose ground truth is not
// the target class.
AsrResult eval_asr(const TinyEncoder& encoder, const Probe& probe,
                   const LabeledDataset& dataset, const AugmentationPolicy& policy,
                   const Trigger& trigger, int target_class);

// Non-target plurality class if it holds at least `threshold` of the
// triggered predictions; empty means the attack hit its intended class.
std::optional<int> mistaken_target(const std::vector<std::uint64_t>& histogram,
                                   int target_class, double threshold = 0.5);

// Text dump: "n dim" header, then per row: label, poisoned flag, values.
// With a trigger both the clean and the triggered block are written.
void dump_representations(const TinyEncoder& encoder, const std::vector<Image>& images,
                          const std::vector<int>& labels,
                          const std::optional<Trigger>& trigger,
                          const AugmentationPolicy& policy, const std::string& path);

struct EvalReport {
    double acc = 0.0;
    double asr = 0.0;
    std::vector<std::uint64_t> histogram;
    std::optional<int> mistaken;
    std::string config_fingerprint;
    std::uint64_t seed = 0;
};

void write_eval_report_kv(const std::string& path, const EvalReport& report);

}  // namespace estas
