#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "estas/byol.hpp"  // AttackSpec, PoisonMode, LambdaSchedule, EpochLoss
#include "estas/dataset.hpp"
#include "estas/model.hpp"

namespace estas {

// Fixed-capacity FIFO of unit-norm negative keys.
class Queue {
public:
    Queue() = default;
    explicit Queue(std::size_t capacity) : capacity_(capacity) {}

    void push(Tensor v);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::deque<Tensor>& items() const { return items_; }
    std::vector<Tensor> snapshot() const;
    void assign(std::vector<Tensor> items);

private:
    std::size_t capacity_ = 0;
    std::deque<Tensor> items_;  // front = oldest
};

struct MocoDims {
    std::size_t in_channels = 3;
    std::size_t encoder_dim = 32;
    std::size_t proj_hidden = 32;
    std::size_t proj_dim = 16;
};

// Gradient-trained query side, EMA key side, and the two negative queues
// (encoder space and projector space).
struct MocoModel {
    TinyEncoder query_encoder;
    MlpHead query_projector;
    TinyEncoder key_encoder;
    MlpHead key_projector;
    Queue queue0;  // encoder-dim negatives
    Queue queue1;  // projector-dim negatives
    double momentum_rate = 0.99;
    double temperature = 0.2;
    MocoDims dims;

    static MocoModel create(const MocoDims& dims, std::size_t queue_capacity,
                            double momentum_rate, double temperature, std::uint64_t seed);
};

struct MocoViews {
    Tensor i_t;  // poisoned view
    Tensor i1, i2;  // clean views
    Tensor j;    // augmented target sample
    bool has_attack = false;
    std::size_t pair_index = 0;
};

MocoViews moco_views(const Image& img, const AttackSpec* spec,
                     const AugmentationPolicy& policy, PoisonMode mode, std::uint64_t seed);

struct MocoOutputs {
    Tensor q0_t, q0;  // query encoder outputs, normalized
    Tensor q1_t, q1;  // query projector outputs, normalized
    Tensor k0_t, k0;  // key encoder outputs, normalized
    Tensor k1_t, k1;  // key projector outputs, normalized
    bool has_attack = false;
};

MocoOutputs moco_forward(const MocoModel& model, const MocoViews& views);

double loss_s_moco(const Tensor& q1, const Tensor& k1, const Queue& queue1, double tau);
double loss_l_moco(const Tensor& q0_t, const Tensor& k0_t, const Queue& queue0, double tau);
double loss_g_moco(const Tensor& q1_t, const Tensor& k1_t, const Queue& queue1, double tau);

// Clean keys only; unit norm is enforced here.
void enqueue_step(MocoModel& model, const Tensor& k0, const Tensor& k1);

struct MocoTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 20;
    double lr = 3e-2;
    double momentum = 0.9;
    double lambda10 = 1.0;
    double lambda20 = 1.0;
    PoisonMode mode = PoisonMode::Consistent;
    bool attack = true;
    std::uint64_t seed = 1;
    bool audit_queues = false;  // record enqueued/attack keys for tests
};

struct MocoTrainResult {
    std::vector<EpochLoss> trace;
    // Filled only when audit_queues is set.
    std::vector<Tensor> audit_clean_keys0, audit_clean_keys1;
    std::vector<Tensor> audit_attack_keys0, audit_attack_keys1;
};

// Resumable optimizer state; seeds are derived per epoch, so this plus the
// model is a complete training snapshot.
struct MocoSession {
    OptimizerState opt_encoder;
    OptimizerState opt_projector;
    std::size_t epochs_done = 0;
};

MocoSession make_moco_session(const MocoModel& model, const MocoTrainConfig& config);

// Runs epochs [session.epochs_done, until_epoch); until_epoch of 0 means
// config.epochs. The lambda schedule always spans the full config.epochs, so
// interrupted and uninterrupted runs see identical lambdas.
MocoTrainResult train_moco(MocoModel& model, MocoSession& session,
                           const LabeledDataset& dataset,
                           const std::vector<AttackSpec>& specs,
                           const AugmentationPolicy& policy, const MocoTrainConfig& config,
                           std::size_t until_epoch = 0);

MocoTrainResult train_moco(MocoModel& model, const LabeledDataset& dataset,
                           const std::vector<AttackSpec>& specs,
                           const AugmentationPolicy& policy, const MocoTrainConfig& config);

// Parameter block plus queue snapshot sections; loading restores training
// bit-exactly.
void save_moco_session(const std::string& path, const MocoModel& model,
                       const MocoSession& session);
void load_moco_session(const std::string& path, MocoModel& model, MocoSession& session);

}  // namespace estas
