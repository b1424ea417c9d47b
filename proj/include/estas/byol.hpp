#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "estas/augment.hpp"
#include "estas/dataset.hpp"
#include "estas/image.hpp"
#include "estas/model.hpp"

namespace estas {

enum class LossVariant { Cascade, GlobalOnly, LocalOnly, Predictor };
enum class PoisonMode { Consistent, Inconsistent };

const char* loss_variant_name(LossVariant v);
const char* poison_mode_name(PoisonMode m);

// One trigger, one target-class sample, one loss shape.
struct AttackSpec {
    Trigger trigger;
    Image target_sample;
    LossVariant variant = LossVariant::Cascade;
};

// lambda_i(e) = lambda_i0 * e / E, advanced per completed epoch.
struct LambdaSchedule {
    double lambda10 = 1.0;
    double lambda20 = 1.0;
    std::size_t total_epochs = 1;
};

std::pair<double, double> lambda_at(const LambdaSchedule& sched, std::size_t epoch);

struct ByolDims {
    std::size_t in_channels = 3;
    std::size_t encoder_dim = 32;
    std::size_t proj_hidden = 32;
    std::size_t proj_dim = 16;
    std::size_t pred_hidden = 32;  // 2x projection dim
};

// Online encoder/projector/predictor plus EMA target encoder/projector. The
// target starts as a copy of the online weights and is never touched by
// gradients.
struct ByolModel {
    TinyEncoder online_encoder;
    MlpHead online_projector;
    MlpHead online_predictor;
    TinyEncoder target_encoder;
    MlpHead target_projector;
    ByolDims dims;

    static ByolModel create(const ByolDims& dims, std::uint64_t seed);

    // All five components under "online."/"target." prefixes, for checkpoints.
    ParameterSet merged_params() const;
    void load_merged_params(const ParameterSet& merged);
};

struct ViewSet {
    Tensor x1, x2;  // clean views of v
    Tensor x3, x4;  // poisoned view of v, augmented target sample
    bool has_attack = false;
    std::size_t pair_index = 0;  // which attack spec produced x3/x4
};

// Four independently seeded streams; x4 depends only on the target sample.
ViewSet make_views(const Image& v, const AttackSpec* spec, const AugmentationPolicy& policy,
                   PoisonMode mode, std::uint64_t seed);

struct BranchOutputs {
    Tensor q1_bar;  // predictor output of branch 1, normalized
    Tensor z2_bar;  // target projector output of branch 2
    Tensor y3_bar, z3_bar;  // online encoder/projector outputs of branch 3
    Tensor y4_bar, z4_bar;  // target encoder/projector outputs of branch 4
    Tensor q3_bar;  // branch 3 through the predictor (ablation variant only)
    bool has_attack = false;
};

BranchOutputs forward_branches(const ByolModel& model, const ViewSet& views);

double loss_s(const Tensor& q1_bar, const Tensor& z2_bar);
double loss_g(const Tensor& z3_bar, const Tensor& z4_bar);
double loss_l(const Tensor& y3_bar, const Tensor& y4_bar);
double loss_a_predictor(const Tensor& q3_bar, const Tensor& z4_bar);

double loss_estas(double ls, double lg, double ll, double lambda1, double lambda2,
                  LossVariant variant = LossVariant::Cascade, double la = 0.0);

struct ByolTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 20;
    double lr = 3e-3;
    // Faster predictor keeps the bootstrap from collapsing without batch
    // statistics.
    double predictor_lr_mult = 10.0;
    double encoder_lr_mult = 1.0;
    // Frozen encoder biases block the constant-shift shortcut: without
    // them the attack loss is cheapest to satisfy by drifting every
    // representation toward the target instead of learning the trigger.
    bool freeze_encoder_biases = true;
    // Re-condition the online representation over the train split every
    // this many epochs (0 = never): fold -mean into the output bias and,
    // when `whiten` is set, a covariance inverse square root into the
    // output weights. Dataset statistics, not batch statistics, so the
    // parameters stay constants at evaluation time. Keeps the
    // representation spread full-rank; otherwise the cascade losses are
    // cheapest to satisfy by flattening it.
    std::size_t recenter_every = 1;
    bool whiten = true;
    // Per-step damped centering of the output bias using the batch's own
    // branch-1 representations; continuous counterweight to the drift the
    // per-epoch pass corrects in bulk. 0 disables.
    double step_center_rate = 0.5;
    double momentum = 0.9;
    double ema_start = 0.99;  // cosine ramp towards ema_end
    double ema_end = 1.0;
    double lambda10 = 1.0;
    double lambda20 = 1.0;
    // Length of the linear lambda ramp; 0 means the full run. A ramp
    // shorter than the run holds the lambdas at their final values once
    // reached.
    std::size_t lambda_ramp_epochs = 0;
    PoisonMode mode = PoisonMode::Consistent;
    bool attack = true;
    std::uint64_t seed = 1;
};

struct EpochLoss {
    std::size_t epoch;
    double loss_s;
    double loss_g;
    double loss_l;
};

struct ByolTrainResult {
    std::vector<EpochLoss> trace;
};

// Cascade training: per batch build views, forward all branches, combine
// losses under the epoch's lambdas, step the online side, EMA the target.
// With several attack specs each batch element samples one uniformly.
ByolTrainResult train_byol(ByolModel& model, const LabeledDataset& dataset,
                           const std::vector<AttackSpec>& specs,
                           const AugmentationPolicy& policy, const ByolTrainConfig& config);

void write_loss_trace(const std::string& path, const std::vector<EpochLoss>& trace);

}  // namespace estas
