#include "estas/byol.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "estas/losses.hpp"
#include "estas/parallel.hpp"
#include "estas/tape.hpp"

namespace estas {

namespace {

constexpr std::uint64_t kEpochTag = 0xe50c0000ULL;
constexpr std::uint64_t kShuffleTag = 0x5f5e55ffULL;
constexpr std::uint64_t kPairTag = 0x9a170000ULL;

void copy_values(const ParameterSet& src, ParameterSet& dst) {
    for (const std::string& name : src.names()) {
        dst.at(name).value = src.at(name).value;
    }
}

void merge_with_prefix(const ParameterSet& src, const std::string& prefix,
                       ParameterSet& dst) {
    for (const std::string& name : src.names()) {
        dst.add(prefix + name, src.at(name).value);
    }
}

void split_with_prefix(const ParameterSet& merged, const std::string& prefix,
                       ParameterSet& dst) {
    for (const std::string& name : dst.names()) {
        dst.at(name).value = merged.at(prefix + name).value;
    }
}

double cosine_ema_rate(double start, double end, std::size_t step, std::size_t total) {
    if (total <= 1) return start;
    const double t = static_cast<double>(step) / static_cast<double>(total - 1);
    return end - (end - start) * (std::cos(3.14159265358979323846 * t) + 1.0) / 2.0;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix. `a` is destroyed;
// eigenvectors land in the columns of `v`.
void jacobi_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& v,
                  std::vector<double>& eig) {
    v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        }
        if (off < 1e-22) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double phi = 0.5 * std::atan2(2.0 * apq, aqq - app);
                const double c = std::cos(phi), s = std::sin(phi);
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p], vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eig.resize(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a[i * n + i];
}

// Bounded spectrum equalizer: rescales each covariance eigendirection
// toward unit spread. Per-pass gains are clipped, and the absolute target
// makes the repeated fold self-limiting: once the spectrum sits at one,
// every gain is one.
std::vector<double> spectrum_equalizer(std::vector<double> cov, std::size_t n, double reg) {
    std::vector<double> v, eig;
    jacobi_eigen(cov, n, v, eig);
    std::vector<double> out(n * n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double sigma = std::sqrt(std::max(eig[k], 0.0) + reg);
        const double gain = std::clamp(1.0 / sigma, 0.7, 1.4);
        for (std::size_t i = 0; i < n; ++i) {
            const double vik = v[i * n + k] * gain;
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += vik * v[j * n + k];
            }
        }
    }
    return out;
}

}  // namespace

const char* loss_variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::Cascade: return "cascade";
        case LossVariant::GlobalOnly: return "global";
        case LossVariant::LocalOnly: return "local";
        case LossVariant::Predictor: return "predictor";
    }
    return "?";
}

const char* poison_mode_name(PoisonMode m) {
    return m == PoisonMode::Consistent ? "consistent" : "inconsistent";
}

std::pair<double, double> lambda_at(const LambdaSchedule& sched, std::size_t epoch) {
    if (epoch > sched.total_epochs) {
        throw std::invalid_argument("lambda_at: epoch beyond schedule end");
    }
    const double f = static_cast<double>(epoch) / static_cast<double>(sched.total_epochs);
    return {sched.lambda10 * f, sched.lambda20 * f};
}

ByolModel ByolModel::create(const ByolDims& dims, std::uint64_t seed) {
    ByolModel m;
    m.dims = dims;
    m.online_encoder = TinyEncoder(dims.in_channels, dims.encoder_dim, hash_seed(seed, 1));
    m.online_projector =
        MlpHead(dims.encoder_dim, dims.proj_hidden, dims.proj_dim, hash_seed(seed, 2));
    m.online_predictor =
        MlpHead(dims.proj_dim, dims.pred_hidden, dims.proj_dim, hash_seed(seed, 3));
    m.target_encoder = TinyEncoder(dims.in_channels, dims.encoder_dim, hash_seed(seed, 1));
    m.target_projector =
        MlpHead(dims.encoder_dim, dims.proj_hidden, dims.proj_dim, hash_seed(seed, 2));
    // Target starts as an exact copy of the online encoder/projector.
    copy_values(m.online_encoder.params, m.target_encoder.params);
    copy_values(m.online_projector.params, m.target_projector.params);
    return m;
}

ParameterSet ByolModel::merged_params() const {
    ParameterSet merged;
    merge_with_prefix(online_encoder.params, "online.encoder.", merged);
    merge_with_prefix(online_projector.params, "online.projector.", merged);
    merge_with_prefix(online_predictor.params, "online.predictor.", merged);
    merge_with_prefix(target_encoder.params, "target.encoder.", merged);
    merge_with_prefix(target_projector.params, "target.projector.", merged);
    return merged;
}

void ByolModel::load_merged_params(const ParameterSet& merged) {
    split_with_prefix(merged, "online.encoder.", online_encoder.params);
    split_with_prefix(merged, "online.projector.", online_projector.params);
    split_with_prefix(merged, "online.predictor.", online_predictor.params);
    split_with_prefix(merged, "target.encoder.", target_encoder.params);
    split_with_prefix(merged, "target.projector.", target_projector.params);
}

ViewSet make_views(const Image& v, const AttackSpec* spec, const AugmentationPolicy& policy,
                   PoisonMode mode, std::uint64_t seed) {
    ViewSet views;
    {
        Rng r1(hash_seed(seed, 0));
        views.x1 = normalize_view(augment(v, policy, r1), policy);
    }
    {
        Rng r2(hash_seed(seed, 1));
        views.x2 = normalize_view(augment(v, policy, r2), policy);
    }
    if (spec != nullptr) {
        Rng r3(hash_seed(seed, 2));
        views.x3 = (mode == PoisonMode::Consistent)
                       ? poison_consistent(v, spec->trigger, policy, r3)
                       : poison_inconsistent(v, spec->trigger, policy, r3);
        Rng r4(hash_seed(seed, 3));
        views.x4 = normalize_view(augment(spec->target_sample, policy, r4), policy);
        views.has_attack = true;
    }
    return views;
}

BranchOutputs forward_branches(const ByolModel& model, const ViewSet& views) {
    BranchOutputs out;
    out.q1_bar = l2_normalize(
        model.online_predictor.forward(model.online_projector.forward(
            model.online_encoder.forward(views.x1))));
    out.z2_bar = l2_normalize(
        model.target_projector.forward(model.target_encoder.forward(views.x2)));
    if (views.has_attack) {
        Tensor y3 = model.online_encoder.forward(views.x3);
        out.y3_bar = l2_normalize(y3);
        Tensor z3 = model.online_projector.forward(y3);
        out.z3_bar = l2_normalize(z3);
        out.q3_bar = l2_normalize(model.online_predictor.forward(z3));
        Tensor y4 = model.target_encoder.forward(views.x4);
        out.y4_bar = l2_normalize(y4);
        out.z4_bar = l2_normalize(model.target_projector.forward(y4));
        out.has_attack = true;
    }
    return out;
}

double loss_s(const Tensor& q1_bar, const Tensor& z2_bar) {
    return normalized_mse(q1_bar, z2_bar);
}
double loss_g(const Tensor& z3_bar, const Tensor& z4_bar) {
    return normalized_mse(z3_bar, z4_bar);
}
double loss_l(const Tensor& y3_bar, const Tensor& y4_bar) {
    return normalized_mse(y3_bar, y4_bar);
}
double loss_a_predictor(const Tensor& q3_bar, const Tensor& z4_bar) {
    return normalized_mse(q3_bar, z4_bar);
}

double loss_estas(double ls, double lg, double ll, double lambda1, double lambda2,
                  LossVariant variant, double la) {
    if (lambda1 < 0.0 || lambda2 < 0.0) {
        throw std::invalid_argument("loss_estas: lambdas must be non-negative");
    }
    switch (variant) {
        case LossVariant::Cascade: return ls + lambda1 * lg + lambda2 * ll;
        case LossVariant::GlobalOnly: return ls + lambda1 * lg;
        case LossVariant::LocalOnly: return ls + lambda2 * ll;
        case LossVariant::Predictor: return ls + lambda1 * la;
    }
    return ls;
}

namespace {

// Per-element losses plus a finished backward pass held on its tape.
struct ElementWork {
    std::unique_ptr<Tape> tape;
    double ls = 0.0, lg = 0.0, ll = 0.0;
    Tensor y1_raw;  // branch-1 encoder output, for the step-wise centering
};

// Builds the online-side graph for one element and runs backward. Target
// branches are computed outside the tape and enter as constants, which is
// the stop-gradient.
ElementWork element_pass(const ByolModel& model, const LabeledDataset& dataset,
                         std::size_t index, const std::vector<AttackSpec>& specs,
                         const AugmentationPolicy& policy, const ByolTrainConfig& config,
                         std::uint64_t epoch_seed, double lambda1, double lambda2,
                         const Tensor* target_center) {
    ElementWork work;
    const Image& v = dataset.train_images[index];

    const AttackSpec* spec = nullptr;
    if (config.attack && !specs.empty()) {
        std::size_t pick = 0;
        if (specs.size() > 1) {
            Rng pair_rng(hash_seed(epoch_seed, index, kPairTag));
            pick = pair_rng.next_below(specs.size());
        }
        spec = &specs[pick];
    }
    ViewSet views = make_views(v, spec, policy, config.mode, hash_seed(epoch_seed, index));

    work.tape = std::make_unique<Tape>();
    Tape& tape = *work.tape;

    auto x1 = tape.constant(views.x1);
    auto y1 = model.online_encoder.forward_tape(tape, x1);
    work.y1_raw = tape.value(y1);
    auto q1_bar = tape.l2_normalize(model.online_predictor.forward_tape(
        tape, model.online_projector.forward_tape(tape, y1)));
    Tensor z2_bar = l2_normalize(
        model.target_projector.forward(model.target_encoder.forward(views.x2)));
    auto d_s = tape.sub(q1_bar, tape.constant(std::move(z2_bar)));
    auto ls_node = tape.dot(d_s, d_s);
    work.ls = tape.scalar_value(ls_node);

    auto total = ls_node;
    if (views.has_attack) {
        const LossVariant variant = spec->variant;
        auto x3 = tape.constant(views.x3);
        auto y3 = model.online_encoder.forward_tape(tape, x3);
        auto y3_bar = tape.l2_normalize(y3);
        auto z3 = model.online_projector.forward_tape(tape, y3);
        auto z3_bar = tape.l2_normalize(z3);

        Tensor y4 = model.target_encoder.forward(views.x4);
        // The attack anchor is centered with the target network's train-set
        // mean; otherwise its direction is dominated by the common mean
        // component and the pull degenerates into a constant drift.
        Tensor y4_centered = y4;
        if (target_center != nullptr) {
            for (std::size_t j = 0; j < y4_centered.numel(); ++j) {
                y4_centered.v[j] -= target_center->v[j];
            }
        }
        Tensor y4_bar = l2_normalize(y4_centered);
        Tensor z4_bar = l2_normalize(model.target_projector.forward(y4));
        auto y4_c = tape.constant(std::move(y4_bar));
        auto z4_c = tape.constant(std::move(z4_bar));

        if (variant == LossVariant::Predictor) {
            auto q3_bar = tape.l2_normalize(model.online_predictor.forward_tape(tape, z3));
            auto d_a = tape.sub(q3_bar, z4_c);
            auto la_node = tape.dot(d_a, d_a);
            work.lg = tape.scalar_value(la_node);
            auto d_l = tape.sub(y3_bar, y4_c);
            work.ll = tape.scalar_value(tape.dot(d_l, d_l));
            total = tape.add(total, tape.axpb(la_node, lambda1, 0.0));
        } else {
            auto d_g = tape.sub(z3_bar, z4_c);
            auto lg_node = tape.dot(d_g, d_g);
            auto d_l = tape.sub(y3_bar, y4_c);
            auto ll_node = tape.dot(d_l, d_l);
            work.lg = tape.scalar_value(lg_node);
            work.ll = tape.scalar_value(ll_node);
            if (variant != LossVariant::LocalOnly) {
                total = tape.add(total, tape.axpb(lg_node, lambda1, 0.0));
            }
            if (variant != LossVariant::GlobalOnly) {
                total = tape.add(total, tape.axpb(ll_node, lambda2, 0.0));
            }
        }
    }

    const double total_value = tape.scalar_value(total);
    if (!std::isfinite(total_value)) {
        throw std::runtime_error("train_byol: non-finite loss");
    }
    tape.backward(total);
    return work;
}

}  // namespace

ByolTrainResult train_byol(ByolModel& model, const LabeledDataset& dataset,
                           const std::vector<AttackSpec>& specs,
                           const AugmentationPolicy& policy, const ByolTrainConfig& config) {
    if (dataset.train_images.empty()) {
        throw std::invalid_argument("train_byol: empty train split");
    }
    if (config.attack && specs.empty()) {
        throw std::invalid_argument("train_byol: attack enabled but no attack spec");
    }
    const std::size_t n = dataset.train_images.size();
    const std::size_t batch = std::min(config.batch_size, n);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    const std::size_t total_steps = steps_per_epoch * config.epochs;
    const std::size_t ramp =
        config.lambda_ramp_epochs > 0 ? config.lambda_ramp_epochs : config.epochs;
    const LambdaSchedule sched{config.lambda10, config.lambda20, ramp};

    OptimizerState opt_enc = OptimizerState::for_params(
        model.online_encoder.params, config.lr * config.encoder_lr_mult, config.momentum);
    OptimizerState opt_proj =
        OptimizerState::for_params(model.online_projector.params, config.lr, config.momentum);
    OptimizerState opt_pred = OptimizerState::for_params(
        model.online_predictor.params, config.lr * config.predictor_lr_mult,
        config.momentum);

    ByolTrainResult result;
    std::vector<std::size_t> order(n);
    std::size_t step = 0;

    // Deterministic inference views for the periodic re-centering pass.
    std::vector<Tensor> center_views;
    if (config.recenter_every > 0) {
        center_views.resize(n);
        parallel_for(n, [&](std::size_t i) {
            center_views[i] = inference_view(dataset.train_images[i], std::nullopt, policy);
        });
    }

    Tensor target_center;
    bool has_center = false;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.recenter_every > 0 && epoch % config.recenter_every == 0) {
            // Fold -mean (and the covariance inverse square root when
            // whitening) into the output affine layer. The flattening
            // directions otherwise soak up the attack loss; whitening also
            // amplifies directions the clean data never uses, which is
            // where a trigger feature lives.
            std::vector<Tensor> reps(n);
            parallel_for(n, [&](std::size_t i) {
                reps[i] = model.online_encoder.forward(center_views[i]);
            });
            const std::size_t d = reps[0].numel();
            Tensor mean = Tensor::zeros({d});
            for (const Tensor& r : reps) {
                for (std::size_t j = 0; j < d; ++j) mean.v[j] += r.v[j];
            }
            for (double& x : mean.v) x /= static_cast<double>(n);

            Tensor& bias = model.online_encoder.params.at("fc.b").value;
            if (!config.whiten) {
                for (std::size_t j = 0; j < d; ++j) bias.v[j] -= mean.v[j];
            } else {
                std::vector<double> cov(d * d, 0.0);
                for (const Tensor& r : reps) {
                    for (std::size_t i = 0; i < d; ++i) {
                        const double di = r.v[i] - mean.v[i];
                        for (std::size_t j = i; j < d; ++j) {
                            cov[i * d + j] += di * (r.v[j] - mean.v[j]);
                        }
                    }
                }
                double trace = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    for (std::size_t j = i; j < d; ++j) {
                        cov[i * d + j] /= static_cast<double>(n);
                        cov[j * d + i] = cov[i * d + j];
                    }
                    trace += cov[i * d + i];
                }
                const double reg = std::max(1e-8, 1e-3 * trace / static_cast<double>(d));
                const std::vector<double> a = spectrum_equalizer(std::move(cov), d, reg);

                // fc.w <- A fc.w ; fc.b <- A (fc.b - mean)
                Tensor& w = model.online_encoder.params.at("fc.w").value;
                const std::size_t in = w.shape[1];
                Tensor new_w = Tensor::zeros(w.shape);
                for (std::size_t o = 0; o < d; ++o) {
                    for (std::size_t k = 0; k < d; ++k) {
                        const double aok = a[o * d + k];
                        if (aok == 0.0) continue;
                        for (std::size_t i = 0; i < in; ++i) {
                            new_w.v[o * in + i] += aok * w.v[k * in + i];
                        }
                    }
                }
                Tensor new_b = Tensor::zeros({d});
                for (std::size_t o = 0; o < d; ++o) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < d; ++k) {
                        s += a[o * d + k] * (bias.v[k] - mean.v[k]);
                    }
                    new_b.v[o] = s;
                }
                w = std::move(new_w);
                bias = std::move(new_b);
            }
            // The target's parameters move only through ema_update, so its
            // mean is tracked separately and subtracted in the loss path.
            if (config.attack) {
                parallel_for(n, [&](std::size_t i) {
                    reps[i] = model.target_encoder.forward(center_views[i]);
                });
                target_center = Tensor::zeros({d});
                for (const Tensor& r : reps) {
                    for (std::size_t j = 0; j < target_center.numel(); ++j) {
                        target_center.v[j] += r.v[j];
                    }
                }
                for (double& x : target_center.v) x /= static_cast<double>(n);
                has_center = true;
            }
        }
        const auto [lambda1, lambda2] = lambda_at(sched, std::min(epoch, ramp));
        const std::uint64_t epoch_seed = hash_seed(config.seed, kEpochTag, epoch);

        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(hash_seed(config.seed, kShuffleTag, epoch));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
        }

        double sum_ls = 0.0, sum_lg = 0.0, sum_ll = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            std::vector<ElementWork> work(count);
            parallel_for(count, [&](std::size_t bi) {
                work[bi] = element_pass(model, dataset, order[start + bi], specs, policy,
                                        config, epoch_seed, lambda1, lambda2,
                                        has_center ? &target_center : nullptr);
            });
            const double scale = 1.0 / static_cast<double>(count);
            for (std::size_t bi = 0; bi < count; ++bi) {
                work[bi].tape->add_param_grads(model.online_encoder.params, scale);
                work[bi].tape->add_param_grads(model.online_projector.params, scale);
                work[bi].tape->add_param_grads(model.online_predictor.params, scale);
                sum_ls += work[bi].ls;
                sum_lg += work[bi].lg;
                sum_ll += work[bi].ll;
            }
            if (config.freeze_encoder_biases) {
                for (const char* name : {"conv1.b", "conv2.b", "fc.b"}) {
                    model.online_encoder.params.at(name).grad.fill(0.0);
                }
            }
            sgd_step(model.online_encoder.params, opt_enc);
            sgd_step(model.online_projector.params, opt_proj);
            sgd_step(model.online_predictor.params, opt_pred);

            if (config.step_center_rate > 0.0) {
                Tensor& bias = model.online_encoder.params.at("fc.b").value;
                const double scale =
                    config.step_center_rate / static_cast<double>(count);
                for (std::size_t bi = 0; bi < count; ++bi) {
                    for (std::size_t j = 0; j < bias.numel(); ++j) {
                        bias.v[j] -= scale * work[bi].y1_raw.v[j];
                    }
                }
            }

            const double rate = cosine_ema_rate(config.ema_start, config.ema_end, step,
                                                total_steps);
            ema_update(model.online_encoder.params, model.target_encoder.params, rate);
            ema_update(model.online_projector.params, model.target_projector.params, rate);
            ++step;
        }

        const double inv_n = 1.0 / static_cast<double>(n);
        EpochLoss row{epoch, sum_ls * inv_n, sum_lg * inv_n, sum_ll * inv_n};
        if (!std::isfinite(row.loss_s) || !std::isfinite(row.loss_g) ||
            !std::isfinite(row.loss_l)) {
            throw std::runtime_error("train_byol: non-finite epoch loss at epoch " +
                                     std::to_string(epoch));
        }
        result.trace.push_back(row);
    }
    return result;
}

void write_loss_trace(const std::string& path, const std::vector<EpochLoss>& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << "epoch,loss_s,loss_g,loss_l\n";
    os.precision(17);
    for (const EpochLoss& row : trace) {
        os << row.epoch << "," << row.loss_s << "," << row.loss_g << "," << row.loss_l
           << "\n";
    }
}

}  // namespace estas
