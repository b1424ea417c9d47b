#include "estas/distill.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "estas/losses.hpp"
#include "estas/parallel.hpp"
#include "estas/rng.hpp"
#include "estas/tape.hpp"

namespace estas {

DistillResult distill_into(TinyEncoder& student, const TinyEncoder& teacher,
                           const LabeledDataset& dataset, const AugmentationPolicy& policy,
                           const DistillConfig& config) {
    if (!(config.subset_fraction > 0.0) || config.subset_fraction > 1.0) {
        throw std::invalid_argument("distill: subset fraction must lie in (0,1]");
    }
    const std::size_t n = dataset.train_images.size();
    const std::size_t subset_n = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(config.subset_fraction * static_cast<double>(n))));
    if (n == 0) throw std::invalid_argument("distill: empty train split");

    std::vector<std::size_t> pick(n);
    for (std::size_t i = 0; i < n; ++i) pick[i] = i;
    Rng rng(hash_seed(config.seed, 0xd157ULL));
    for (std::size_t i = n; i > 1; --i) {
        std::swap(pick[i - 1], pick[rng.next_below(i)]);
    }
    pick.resize(subset_n);

    // Inference views are deterministic, so both sides are precomputed once.
    std::vector<Tensor> views(subset_n);
    std::vector<Tensor> teacher_reps(subset_n);
    parallel_for(subset_n, [&](std::size_t i) {
        views[i] = inference_view(dataset.train_images[pick[i]], std::nullopt, policy);
        teacher_reps[i] = l2_normalize(teacher.forward(views[i]));
    });

    OptimizerState opt =
        OptimizerState::for_params(student.params, config.lr, config.momentum);
    const std::size_t batch = std::min(config.batch_size, subset_n);

    DistillResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(subset_n);
        for (std::size_t i = 0; i < subset_n; ++i) order[i] = i;
        Rng shuffle_rng(hash_seed(config.seed, 0xd157ffULL, epoch));
        for (std::size_t i = subset_n; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
        }

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < subset_n; start += batch) {
            const std::size_t count = std::min(batch, subset_n - start);
            std::vector<std::unique_ptr<Tape>> tapes(count);
            std::vector<double> losses(count);
            parallel_for(count, [&](std::size_t bi) {
                const std::size_t i = order[start + bi];
                tapes[bi] = std::make_unique<Tape>();
                Tape& tape = *tapes[bi];
                auto rep = tape.l2_normalize(
                    student.forward_tape(tape, tape.constant(views[i])));
                auto d = tape.sub(rep, tape.constant(teacher_reps[i]));
                auto loss = tape.dot(d, d);
                losses[bi] = tape.scalar_value(loss);
                tape.backward(loss);
            });
            const double scale = 1.0 / static_cast<double>(count);
            for (std::size_t bi = 0; bi < count; ++bi) {
                tapes[bi]->add_param_grads(student.params, scale);
                epoch_loss += losses[bi];
            }
            sgd_step(student.params, opt);
        }
        epoch_loss /= static_cast<double>(subset_n);
        if (!std::isfinite(epoch_loss)) {
            throw std::runtime_error("distill: non-finite loss at epoch " +
                                     std::to_string(epoch));
        }
        result.loss_trace.push_back(epoch_loss);
    }
    return result;
}

std::pair<TinyEncoder, DistillResult> distill(const TinyEncoder& teacher,
                                              const LabeledDataset& dataset,
                                              const AugmentationPolicy& policy,
                                              const DistillConfig& config) {
    TinyEncoder student(teacher.in_channels(), teacher.out_dim(),
                        hash_seed(config.seed, 0x57adULL));
    DistillResult result = distill_into(student, teacher, dataset, policy, config);
    return {std::move(student), std::move(result)};
}

std::pair<EvalReport, EvalReport> evaluate_defense(
    const TinyEncoder& teacher, const TinyEncoder& student, const LabeledDataset& dataset,
    const AugmentationPolicy& policy, const Trigger& trigger, int target_class,
    const ProbeConfig& probe_config, std::uint64_t seed) {
    auto evaluate = [&](const TinyEncoder& encoder) {
        Probe probe = train_probe(encoder, dataset, policy, probe_config, seed);
        EvalReport report;
        report.seed = seed;
        report.acc = eval_acc(encoder, probe, dataset, policy);
        AsrResult asr = eval_asr(encoder, probe, dataset, policy, trigger, target_class);
        report.asr = asr.asr;
        report.histogram = asr.histogram;
        report.mistaken = mistaken_target(asr.histogram, target_class);
        return report;
    };
    return {evaluate(teacher), evaluate(student)};
}

}  // namespace estas
