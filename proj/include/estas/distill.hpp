#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "estas/augment.hpp"
#include "estas/dataset.hpp"
#include "estas/model.hpp"
#include "estas/probe_eval.hpp"

namespace estas {

struct DistillConfig {
    double subset_fraction = 0.25;  // of the clean train split, in (0,1]
    std::size_t epochs = 60;
    std::size_t batch_size = 20;
    double lr = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 1;
};

struct DistillResult {
    std::vector<double> loss_trace;  // mean per epoch
};

// Regresses the student's normalized representation onto the teacher's over
// clean, trigger-free inference views of a random train subset. The teacher
// is read-only; labels are never touched.
DistillResult distill_into(TinyEncoder& student, const TinyEncoder& teacher,
                           const LabeledDataset& dataset, const AugmentationPolicy& policy,
                           const DistillConfig& config);

// Fresh student with the teacher's architecture.
std::pair<TinyEncoder, DistillResult> distill(const TinyEncoder& teacher,
                                              const LabeledDataset& dataset,
                                              const AugmentationPolicy& policy,
                                              const DistillConfig& config);

// Probes retrained independently per encoder on identical splits and seeds.
std::pair<EvalReport, EvalReport> evaluate_defense(
    const TinyEncoder& teacher, const TinyEncoder& student, const LabeledDataset& dataset,
    const AugmentationPolicy& policy, const Trigger& trigger, int target_class,
    const ProbeConfig& probe_config, std::uint64_t seed);

}  // namespace estas
