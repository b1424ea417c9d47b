#include "estas/probe_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "estas/parallel.hpp"
#include "estas/tape.hpp"

namespace estas {

namespace {

// Unit-normalize unless the vector is exactly zero.
Tensor safe_normalize(const Tensor& v) {
    const double n = norm2(v);
    if (n == 0.0) return v;
    Tensor out = v;
    for (double& x : out.v) x /= n;
    return out;
}

}  // namespace

Probe train_probe_on_reps(const std::vector<Tensor>& reps, const std::vector<int>& labels,
                          std::size_t num_classes, const ProbeConfig& config,
                          std::uint64_t seed) {
    if (reps.empty() || reps.size() != labels.size()) {
        throw std::invalid_argument("train_probe: empty or mismatched labeled split");
    }
    std::vector<bool> seen(num_classes, false);
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
            throw std::invalid_argument("train_probe: label out of range");
        }
        seen[static_cast<std::size_t>(l)] = true;
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (!seen[c]) {
            throw std::invalid_argument("train_probe: class " + std::to_string(c) +
                                        " missing from split");
        }
    }

    Probe probe;
    probe.num_classes = num_classes;
    probe.normalize_inputs = config.normalize_inputs;
    probe.head = MlpHead(reps[0].numel(), config.hidden, num_classes, hash_seed(seed, 21));

    std::vector<Tensor> inputs;
    inputs.reserve(reps.size());
    for (const Tensor& r : reps) {
        inputs.push_back(config.normalize_inputs ? safe_normalize(r) : r);
    }

    OptimizerState opt =
        OptimizerState::for_params(probe.head.params, config.lr, 0.0);
    const double scale = 1.0 / static_cast<double>(reps.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            Tape tape;
            auto logits = probe.head.forward_tape(tape, tape.constant(inputs[i]));
            // Cross-entropy via the softmax-log node: one-hot dots expose
            // per-class scalars, true class first.
            std::vector<Tape::NodeId> ordered;
            ordered.reserve(num_classes);
            const auto label = static_cast<std::size_t>(labels[i]);
            for (std::size_t c = 0; c < num_classes; ++c) {
                const std::size_t cls = (c == 0) ? label : (c <= label ? c - 1 : c);
                Tensor basis = Tensor::zeros({num_classes});
                basis.v[cls] = 1.0;
                ordered.push_back(tape.dot(logits, tape.constant(std::move(basis))));
            }
            auto ce = tape.neg_log_softmax_first(ordered);
            tape.backward(ce);
            tape.add_param_grads(probe.head.params, scale);
        }
        sgd_step(probe.head.params, opt);
    }
    return probe;
}

Probe train_probe(const TinyEncoder& encoder, const LabeledDataset& dataset,
                  const AugmentationPolicy& policy, const ProbeConfig& config,
                  std::uint64_t seed) {
    if (dataset.probe_images.empty()) {
        throw std::invalid_argument("train_probe: empty probe split");
    }
    std::vector<Tensor> reps(dataset.probe_images.size());
    parallel_for(reps.size(), [&](std::size_t i) {
        reps[i] = encoder.forward(
            inference_view(dataset.probe_images[i], std::nullopt, policy));
    });
    return train_probe_on_reps(reps, dataset.probe_labels, dataset.num_classes, config,
                               seed);
}

int probe_predict(const Probe& probe, const Tensor& representation) {
    Tensor logits = probe.head.forward(
        probe.normalize_inputs ? safe_normalize(representation) : representation);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.numel(); ++c) {
        if (logits.v[c] > logits.v[best]) best = c;
    }
    return static_cast<int>(best);
}

double eval_acc(const TinyEncoder& encoder, const Probe& probe,
                const LabeledDataset& dataset, const AugmentationPolicy& policy) {
    if (dataset.test_images.empty()) throw std::invalid_argument("eval_acc: empty test split");
    std::vector<int> preds(dataset.test_images.size());
    parallel_for(preds.size(), [&](std::size_t i) {
        preds[i] = probe_predict(
            probe, encoder.forward(inference_view(dataset.test_images[i], std::nullopt,
                                                  policy)));
    });
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == dataset.test_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

AsrResult eval_asr(const TinyEncoder& encoder, const Probe& probe,
                   const LabeledDataset& dataset, const AugmentationPolicy& policy,
                   const Trigger& trigger, int target_class) {
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < dataset.test_images.size(); ++i) {
        if (dataset.test_labels[i] != target_class) indices.push_back(i);
    }
    if (indices.empty()) {
        throw std::invalid_argument("eval_asr: no non-target test images");
    }
    std::vector<int> preds(indices.size());
    parallel_for(indices.size(), [&](std::size_t i) {
        preds[i] = probe_predict(
            probe, encoder.forward(inference_view(dataset.test_images[indices[i]], trigger,
                                                  policy)));
    });
    AsrResult result;
    result.histogram.assign(probe.num_classes, 0);
    for (int p : preds) ++result.histogram[static_cast<std::size_t>(p)];
    result.total = indices.size();
    result.asr = static_cast<double>(result.histogram[static_cast<std::size_t>(target_class)]) /
                 static_cast<double>(result.total);
    return result;
}

std::optional<int> mistaken_target(const std::vector<std::uint64_t>& histogram,
                                   int target_class, double threshold) {
    std::uint64_t total = 0;
    for (std::uint64_t h : histogram) total += h;
    if (total == 0) return std::nullopt;
    std::size_t best = histogram.size();
    for (std::size_t c = 0; c < histogram.size(); ++c) {
        if (static_cast<int>(c) == target_class) continue;
        if (best == histogram.size() || histogram[c] > histogram[best]) best = c;
    }
    if (best == histogram.size()) return std::nullopt;
    const double fraction =
        static_cast<double>(histogram[best]) / static_cast<double>(total);
    if (fraction >= threshold) return static_cast<int>(best);
    return std::nullopt;
}

void dump_representations(const TinyEncoder& encoder, const std::vector<Image>& images,
                          const std::vector<int>& labels,
                          const std::optional<Trigger>& trigger,
                          const AugmentationPolicy& policy, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    const std::size_t blocks = trigger.has_value() ? 2 : 1;
    os << images.size() * blocks << " " << encoder.out_dim() << "\n";
    os.precision(17);
    auto write_block = [&](bool poisoned) {
        std::vector<Tensor> reps(images.size());
        parallel_for(images.size(), [&](std::size_t i) {
            reps[i] = encoder.forward(
                inference_view(images[i], poisoned ? trigger : std::nullopt, policy));
        });
        for (std::size_t i = 0; i < images.size(); ++i) {
            os << labels[i] << " " << (poisoned ? 1 : 0);
            for (double x : reps[i].v) os << " " << x;
            os << "\n";
        }
    };
    write_block(false);
    if (trigger.has_value()) write_block(true);
    if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

void write_eval_report_kv(const std::string& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.precision(17);
    os << "acc = " << report.acc << "\n";
    os << "asr = " << report.asr << "\n";
    os << "mistaken_target = "
       << (report.mistaken.has_value() ? std::to_string(*report.mistaken) : "none") << "\n";
    os << "seed = " << report.seed << "\n";
    os << "config = " << report.config_fingerprint << "\n";
    os << "histogram =";
    for (std::uint64_t h : report.histogram) os << " " << h;
    os << "\n";
}

}  // namespace estas
