#include "estas/moco.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "estas/checkpoint.hpp"
#include "estas/losses.hpp"
#include "estas/parallel.hpp"
#include "estas/tape.hpp"

namespace estas {

namespace {

constexpr std::uint64_t kEpochTag = 0x0c0e50ULL;
constexpr std::uint64_t kShuffleTag = 0x0c55ffULL;
constexpr std::uint64_t kPairTag = 0x0c9a17ULL;

void copy_values(const ParameterSet& src, ParameterSet& dst) {
    for (const std::string& name : src.names()) {
        dst.at(name).value = src.at(name).value;
    }
}

void require_unit_norm(const Tensor& v, const char* what) {
    const double n = norm2(v);
    if (std::abs(n - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string(what) + ": vector is not unit norm");
    }
}

}  // namespace

void Queue::push(Tensor v) {
    if (capacity_ == 0) throw std::logic_error("queue has no capacity");
    items_.push_back(std::move(v));
    if (items_.size() > capacity_) items_.pop_front();
}

std::vector<Tensor> Queue::snapshot() const {
    return std::vector<Tensor>(items_.begin(), items_.end());
}

void Queue::assign(std::vector<Tensor> items) {
    if (items.size() > capacity_) throw std::invalid_argument("queue assign over capacity");
    items_.assign(std::make_move_iterator(items.begin()),
                  std::make_move_iterator(items.end()));
}

MocoModel MocoModel::create(const MocoDims& dims, std::size_t queue_capacity,
                            double momentum_rate, double temperature, std::uint64_t seed) {
    if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
    if (momentum_rate < 0.0 || momentum_rate > 1.0) {
        throw std::invalid_argument("momentum rate must lie in [0,1]");
    }
    MocoModel m;
    m.dims = dims;
    m.momentum_rate = momentum_rate;
    m.temperature = temperature;
    m.query_encoder = TinyEncoder(dims.in_channels, dims.encoder_dim, hash_seed(seed, 11));
    m.query_projector =
        MlpHead(dims.encoder_dim, dims.proj_hidden, dims.proj_dim, hash_seed(seed, 12));
    m.key_encoder = TinyEncoder(dims.in_channels, dims.encoder_dim, hash_seed(seed, 11));
    m.key_projector =
        MlpHead(dims.encoder_dim, dims.proj_hidden, dims.proj_dim, hash_seed(seed, 12));
    copy_values(m.query_encoder.params, m.key_encoder.params);
    copy_values(m.query_projector.params, m.key_projector.params);
    m.queue0 = Queue(queue_capacity);
    m.queue1 = Queue(queue_capacity);
    return m;
}

MocoViews moco_views(const Image& img, const AttackSpec* spec,
                     const AugmentationPolicy& policy, PoisonMode mode,
                     std::uint64_t seed) {
    MocoViews views;
    {
        Rng r(hash_seed(seed, 1));
        views.i1 = normalize_view(augment(img, policy, r), policy);
    }
    {
        Rng r(hash_seed(seed, 2));
        views.i2 = normalize_view(augment(img, policy, r), policy);
    }
    if (spec != nullptr) {
        Rng rt(hash_seed(seed, 0));
        views.i_t = (mode == PoisonMode::Consistent)
                        ? poison_consistent(img, spec->trigger, policy, rt)
                        : poison_inconsistent(img, spec->trigger, policy, rt);
        Rng rj(hash_seed(seed, 3));
        views.j = normalize_view(augment(spec->target_sample, policy, rj), policy);
        views.has_attack = true;
    }
    return views;
}

MocoOutputs moco_forward(const MocoModel& model, const MocoViews& views) {
    MocoOutputs out;
    Tensor q0_raw = model.query_encoder.forward(views.i1);
    out.q0 = l2_normalize(q0_raw);
    out.q1 = l2_normalize(model.query_projector.forward(q0_raw));
    Tensor k0_raw = model.key_encoder.forward(views.i2);
    out.k0 = l2_normalize(k0_raw);
    out.k1 = l2_normalize(model.key_projector.forward(k0_raw));
    if (views.has_attack) {
        Tensor q0t_raw = model.query_encoder.forward(views.i_t);
        out.q0_t = l2_normalize(q0t_raw);
        out.q1_t = l2_normalize(model.query_projector.forward(q0t_raw));
        Tensor k0t_raw = model.key_encoder.forward(views.j);
        out.k0_t = l2_normalize(k0t_raw);
        out.k1_t = l2_normalize(model.key_projector.forward(k0t_raw));
        out.has_attack = true;
    }
    return out;
}

double loss_s_moco(const Tensor& q1, const Tensor& k1, const Queue& queue1, double tau) {
    return info_nce(q1, k1, queue1.snapshot(), tau);
}

double loss_l_moco(const Tensor& q0_t, const Tensor& k0_t, const Queue& queue0, double tau) {
    return info_nce(q0_t, k0_t, queue0.snapshot(), tau);
}

double loss_g_moco(const Tensor& q1_t, const Tensor& k1_t, const Queue& queue1, double tau) {
    return info_nce(q1_t, k1_t, queue1.snapshot(), tau);
}

void enqueue_step(MocoModel& model, const Tensor& k0, const Tensor& k1) {
    require_unit_norm(k0, "enqueue_step k0");
    require_unit_norm(k1, "enqueue_step k1");
    model.queue0.push(k0);
    model.queue1.push(k1);
}

namespace {

struct MocoElementWork {
    std::unique_ptr<Tape> tape;
    double ls = 0.0, lg = 0.0, ll = 0.0;
    Tensor k0, k1;          // clean keys to enqueue
    Tensor k0_t, k1_t;      // attack keys (audit only, never enqueued)
    bool has_attack = false;
};

// InfoNCE on the tape: scaled dots against the positive and the queue
// snapshot, then the softmax-log node.
Tape::NodeId tape_info_nce(Tape& tape, Tape::NodeId q, const Tensor& k_pos,
                           const std::vector<Tensor>& negatives, double tau) {
    std::vector<Tape::NodeId> logits;
    logits.reserve(1 + negatives.size());
    const double inv_tau = 1.0 / tau;
    logits.push_back(tape.axpb(tape.dot(q, tape.constant(k_pos)), inv_tau, 0.0));
    for (const Tensor& k : negatives) {
        logits.push_back(tape.axpb(tape.dot(q, tape.constant(k)), inv_tau, 0.0));
    }
    return tape.neg_log_softmax_first(logits);
}

MocoElementWork moco_element_pass(const MocoModel& model, const LabeledDataset& dataset,
                                  std::size_t index, const std::vector<AttackSpec>& specs,
                                  const AugmentationPolicy& policy,
                                  const MocoTrainConfig& config, std::uint64_t epoch_seed,
                                  double lambda1, double lambda2,
                                  const std::vector<Tensor>& negatives0,
                                  const std::vector<Tensor>& negatives1) {
    MocoElementWork work;
    const Image& img = dataset.train_images[index];

    const AttackSpec* spec = nullptr;
    if (config.attack && !specs.empty()) {
        std::size_t pick = 0;
        if (specs.size() > 1) {
            Rng pair_rng(hash_seed(epoch_seed, index, kPairTag));
            pick = pair_rng.next_below(specs.size());
        }
        spec = &specs[pick];
    }
    MocoViews views = moco_views(img, spec, policy, config.mode, hash_seed(epoch_seed, index));

    // Key side is forward-only; its outputs are gradient constants.
    Tensor k0_raw = model.key_encoder.forward(views.i2);
    work.k0 = l2_normalize(k0_raw);
    work.k1 = l2_normalize(model.key_projector.forward(k0_raw));

    work.tape = std::make_unique<Tape>();
    Tape& tape = *work.tape;

    auto q0_raw = model.query_encoder.forward_tape(tape, tape.constant(views.i1));
    auto q1 = tape.l2_normalize(model.query_projector.forward_tape(tape, q0_raw));
    auto ls_node = tape_info_nce(tape, q1, work.k1, negatives1, model.temperature);
    work.ls = tape.scalar_value(ls_node);

    auto total = ls_node;
    if (views.has_attack) {
        Tensor k0t_raw = model.key_encoder.forward(views.j);
        work.k0_t = l2_normalize(k0t_raw);
        work.k1_t = l2_normalize(model.key_projector.forward(k0t_raw));
        work.has_attack = true;

        auto q0t_raw = model.query_encoder.forward_tape(tape, tape.constant(views.i_t));
        auto q0_t = tape.l2_normalize(q0t_raw);
        auto q1_t = tape.l2_normalize(model.query_projector.forward_tape(tape, q0t_raw));

        auto lg_node = tape_info_nce(tape, q1_t, work.k1_t, negatives1, model.temperature);
        auto ll_node = tape_info_nce(tape, q0_t, work.k0_t, negatives0, model.temperature);
        work.lg = tape.scalar_value(lg_node);
        work.ll = tape.scalar_value(ll_node);
        total = tape.add(total, tape.axpb(lg_node, lambda1, 0.0));
        total = tape.add(total, tape.axpb(ll_node, lambda2, 0.0));
    }

    if (!std::isfinite(tape.scalar_value(total))) {
        throw std::runtime_error("train_moco: non-finite loss");
    }
    tape.backward(total);
    return work;
}

}  // namespace

MocoSession make_moco_session(const MocoModel& model, const MocoTrainConfig& config) {
    MocoSession s;
    s.opt_encoder =
        OptimizerState::for_params(model.query_encoder.params, config.lr, config.momentum);
    s.opt_projector =
        OptimizerState::for_params(model.query_projector.params, config.lr, config.momentum);
    s.epochs_done = 0;
    return s;
}

MocoTrainResult train_moco(MocoModel& model, MocoSession& session,
                           const LabeledDataset& dataset,
                           const std::vector<AttackSpec>& specs,
                           const AugmentationPolicy& policy, const MocoTrainConfig& config,
                           std::size_t until_epoch) {
    if (dataset.train_images.empty()) {
        throw std::invalid_argument("train_moco: empty train split");
    }
    if (config.attack && specs.empty()) {
        throw std::invalid_argument("train_moco: attack enabled but no attack spec");
    }
    if (until_epoch == 0) until_epoch = config.epochs;
    if (until_epoch > config.epochs) {
        throw std::invalid_argument("train_moco: until_epoch beyond config.epochs");
    }
    const std::size_t n = dataset.train_images.size();
    const std::size_t batch = std::min(config.batch_size, n);
    const LambdaSchedule sched{config.lambda10, config.lambda20, config.epochs};

    MocoTrainResult result;
    std::vector<std::size_t> order(n);

    for (std::size_t epoch = session.epochs_done; epoch < until_epoch; ++epoch) {
        const auto [lambda1, lambda2] = lambda_at(sched, epoch);
        const std::uint64_t epoch_seed = hash_seed(config.seed, kEpochTag, epoch);

        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(hash_seed(config.seed, kShuffleTag, epoch));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
        }

        double sum_ls = 0.0, sum_lg = 0.0, sum_ll = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            // The whole batch contrasts against the queue state at batch start.
            const std::vector<Tensor> negatives0 = model.queue0.snapshot();
            const std::vector<Tensor> negatives1 = model.queue1.snapshot();

            std::vector<MocoElementWork> work(count);
            parallel_for(count, [&](std::size_t bi) {
                work[bi] = moco_element_pass(model, dataset, order[start + bi], specs,
                                             policy, config, epoch_seed, lambda1, lambda2,
                                             negatives0, negatives1);
            });

            const double scale = 1.0 / static_cast<double>(count);
            for (std::size_t bi = 0; bi < count; ++bi) {
                work[bi].tape->add_param_grads(model.query_encoder.params, scale);
                work[bi].tape->add_param_grads(model.query_projector.params, scale);
                sum_ls += work[bi].ls;
                sum_lg += work[bi].lg;
                sum_ll += work[bi].ll;
            }
            sgd_step(model.query_encoder.params, session.opt_encoder);
            sgd_step(model.query_projector.params, session.opt_projector);
            ema_update(model.query_encoder.params, model.key_encoder.params,
                       model.momentum_rate);
            ema_update(model.query_projector.params, model.key_projector.params,
                       model.momentum_rate);
            for (std::size_t bi = 0; bi < count; ++bi) {
                enqueue_step(model, work[bi].k0, work[bi].k1);
                if (config.audit_queues) {
                    result.audit_clean_keys0.push_back(work[bi].k0);
                    result.audit_clean_keys1.push_back(work[bi].k1);
                    if (work[bi].has_attack) {
                        result.audit_attack_keys0.push_back(work[bi].k0_t);
                        result.audit_attack_keys1.push_back(work[bi].k1_t);
                    }
                }
            }
        }

        const double inv_n = 1.0 / static_cast<double>(n);
        EpochLoss row{epoch, sum_ls * inv_n, sum_lg * inv_n, sum_ll * inv_n};
        if (!std::isfinite(row.loss_s) || !std::isfinite(row.loss_g) ||
            !std::isfinite(row.loss_l)) {
            throw std::runtime_error("train_moco: non-finite epoch loss at epoch " +
                                     std::to_string(epoch));
        }
        result.trace.push_back(row);
        session.epochs_done = epoch + 1;
    }
    return result;
}

MocoTrainResult train_moco(MocoModel& model, const LabeledDataset& dataset,
                           const std::vector<AttackSpec>& specs,
                           const AugmentationPolicy& policy, const MocoTrainConfig& config) {
    MocoSession session = make_moco_session(model, config);
    return train_moco(model, session, dataset, specs, policy, config);
}

void save_moco_session(const std::string& path, const MocoModel& model,
                       const MocoSession& session) {
    ParameterSet merged;
    auto merge = [&merged](const ParameterSet& src, const std::string& prefix) {
        for (const std::string& name : src.names()) {
            merged.add(prefix + name, src.at(name).value);
        }
    };
    merge(model.query_encoder.params, "query.encoder.");
    merge(model.query_projector.params, "query.projector.");
    merge(model.key_encoder.params, "key.encoder.");
    merge(model.key_projector.params, "key.projector.");
    for (const std::string& name : session.opt_encoder.names) {
        merged.add("vel.encoder." + name, session.opt_encoder.velocity.at(name));
    }
    for (const std::string& name : session.opt_projector.names) {
        merged.add("vel.projector." + name, session.opt_projector.velocity.at(name));
    }
    merged.add("meta.epochs_done",
               Tensor::scalar(static_cast<double>(session.epochs_done)));

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_params(os, merged);
    write_vector_block(os, model.queue0.snapshot(), model.dims.encoder_dim);
    write_vector_block(os, model.queue1.snapshot(), model.dims.proj_dim);
}

void load_moco_session(const std::string& path, MocoModel& model, MocoSession& session) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    ParameterSet merged = read_params(is);
    auto split = [&merged](ParameterSet& dst, const std::string& prefix) {
        for (const std::string& name : dst.names()) {
            dst.at(name).value = merged.at(prefix + name).value;
        }
    };
    split(model.query_encoder.params, "query.encoder.");
    split(model.query_projector.params, "query.projector.");
    split(model.key_encoder.params, "key.encoder.");
    split(model.key_projector.params, "key.projector.");
    for (const std::string& name : session.opt_encoder.names) {
        session.opt_encoder.velocity.at(name) = merged.at("vel.encoder." + name).value;
    }
    for (const std::string& name : session.opt_projector.names) {
        session.opt_projector.velocity.at(name) = merged.at("vel.projector." + name).value;
    }
    session.epochs_done =
        static_cast<std::size_t>(merged.at("meta.epochs_done").value.v[0]);
    model.queue0.assign(read_vector_block(is));
    model.queue1.assign(read_vector_block(is));
}

}  // namespace estas
