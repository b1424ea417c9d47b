#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "estas/image.hpp"

namespace estas {

// Image corpus with three splits. Train labels exist only as hidden ground
// truth: every read goes through hidden_train_label() and bumps an audit
// counter, which tests assert stays flat across training.
class LabeledDataset {
public:
    std::size_t num_classes = 0;

    std::vector<Image> train_images;
    std::vector<Image> probe_images;
    std::vector<int> probe_labels;
    std::vector<Image> test_images;
    std::vector<int> test_labels;

    int hidden_train_label(std::size_t i) const {
        ++train_label_reads_;
        return train_labels_[i];
    }
    std::uint64_t train_label_read_count() const { return train_label_reads_; }

    void set_train_labels(std::vector<int> labels) { train_labels_ = std::move(labels); }
    std::size_t train_size() const { return train_images.size(); }

private:
    std::vector<int> train_labels_;
    mutable std::uint64_t train_label_reads_ = 0;
};

struct SynthSpec {
    std::size_t classes = 5;
    std::size_t per_class = 100;
    std::size_t image_size = 32;
    std::uint64_t seed = 1;
};

// Parametric classes (base colour, stripe orientation, blob position) plus
// per-image noise. The probe split is carved out of the train pool:
// max(ceil(0.01*K*n), K) images, at least one per class.
LabeledDataset synth_dataset(const SynthSpec& spec);

// Manifest so a dataset regenerates bit-identically from its text config.
void write_synth_manifest(const std::string& path, const SynthSpec& spec);
SynthSpec read_synth_manifest(const std::string& path);

// 3073-byte records: label byte then 32x32 R,G,B planes, bytes scaled to
// [0,1]. Everything lands in the train split.
LabeledDataset read_cifar_binary(const std::string& path);

// Per-channel mean/std over the train split.
void compute_norm_stats(const LabeledDataset& ds, double mean[3], double stdev[3]);

}  // namespace estas
