#include "estas/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "estas/checkpoint.hpp"
#include "estas/parallel.hpp"
#include "estas/query_cost.hpp"

namespace estas {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kTargetPickTag = 0x7a26e7ULL;
constexpr std::uint64_t kProbeTag = 0x1ab5ULL;

PoisonMode parse_mode(const std::string& s) {
    if (s == "consistent") return PoisonMode::Consistent;
    if (s == "inconsistent") return PoisonMode::Inconsistent;
    throw ConfigError("poison.mode must be consistent|inconsistent, got '" + s + "'");
}

LossVariant parse_variant(const std::string& s) {
    if (s == "cascade") return LossVariant::Cascade;
    if (s == "global") return LossVariant::GlobalOnly;
    if (s == "local") return LossVariant::LocalOnly;
    if (s == "predictor") return LossVariant::Predictor;
    throw ConfigError("loss.variant must be cascade|global|local|predictor, got '" + s +
                      "'");
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

struct Prepared {
    LabeledDataset dataset;
    AugmentationPolicy policy;
    std::vector<AttackSpec> specs;
    Trigger eval_trigger;
    int eval_target = 0;
};

std::size_t default_placement(const ExperimentConfig& cfg, std::size_t image_size) {
    if (cfg.trigger_size + 1 >= image_size) return 0;
    return image_size - cfg.trigger_size - 1;
}

// Selection simulation: reads hidden train labels (audited) before training.
std::vector<std::size_t> target_class_indices(const LabeledDataset& ds, int cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.train_size(); ++i) {
        if (ds.hidden_train_label(i) == cls) idx.push_back(i);
    }
    if (idx.empty()) {
        throw ConfigError("no train images of target class " + std::to_string(cls));
    }
    return idx;
}

std::size_t select_target_sample(const LabeledDataset& ds, int cls, std::size_t k,
                                 std::uint64_t seed) {
    std::vector<std::size_t> idx = target_class_indices(ds, cls);
    Rng rng(hash_seed(seed, kTargetPickTag, static_cast<std::uint64_t>(cls)));
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.next_below(i)]);
    }
    return idx[k % idx.size()];
}

Prepared prepare(const ExperimentConfig& cfg) {
    Prepared prep;
    if (cfg.use_cifar) {
        prep.dataset = read_cifar_binary(cfg.cifar_train);
        if (!cfg.cifar_test.empty()) {
            LabeledDataset test = read_cifar_binary(cfg.cifar_test);
            for (std::size_t i = 0; i < test.train_size(); ++i) {
                prep.dataset.test_images.push_back(test.train_images[i]);
                prep.dataset.test_labels.push_back(test.hidden_train_label(i));
            }
        }
        if (prep.dataset.probe_images.empty()) {
            throw ConfigError("cifar runs need a probe split; not implemented at desk scale");
        }
    } else {
        prep.dataset = synth_dataset(cfg.synth);
    }

    const std::size_t image_size = cfg.use_cifar ? 32 : cfg.synth.image_size;
    prep.policy.out_h = image_size;
    prep.policy.out_w = image_size;
    prep.policy.area_lo = cfg.crop_lo;
    prep.policy.area_hi = cfg.crop_hi;
    prep.policy.flip_prob = cfg.flip_prob;
    prep.policy.jitter = cfg.jitter;
    double mean[3], stdev[3];
    compute_norm_stats(prep.dataset, mean, stdev);
    for (int c = 0; c < 3; ++c) {
        prep.policy.mean[c] = mean[c];
        prep.policy.stdev[c] = stdev[c];
    }
    prep.policy.validate();

    const std::size_t def = default_placement(cfg, image_size);
    if (cfg.multi.empty()) {
        prep.eval_trigger = make_trigger(cfg.trigger_seed, cfg.trigger_size,
                                         cfg.trigger_row.value_or(def),
                                         cfg.trigger_col.value_or(def));
        prep.eval_target = cfg.target_class;
        AttackSpec spec;
        spec.trigger = prep.eval_trigger;
        spec.variant = cfg.variant;
        const std::size_t sample = select_target_sample(prep.dataset, cfg.target_class,
                                                        cfg.target_sample_index, cfg.seed);
        spec.target_sample = prep.dataset.train_images[sample];
        prep.specs.push_back(std::move(spec));
    } else {
        // Same trigger pattern at several placements, one target class each.
        for (std::size_t i = 0; i < cfg.multi.size(); ++i) {
            const MultiTargetEntry& e = cfg.multi[i];
            for (std::size_t jj = 0; jj < i; ++jj) {
                const MultiTargetEntry& o = cfg.multi[jj];
                const bool overlap = e.row < o.row + cfg.trigger_size &&
                                     o.row < e.row + cfg.trigger_size &&
                                     e.col < o.col + cfg.trigger_size &&
                                     o.col < e.col + cfg.trigger_size;
                if (overlap) throw ConfigError("multi-target placements overlap");
            }
            AttackSpec spec;
            spec.trigger =
                make_trigger(cfg.trigger_seed, cfg.trigger_size, e.row, e.col);
            spec.variant = cfg.variant;
            const std::size_t sample = select_target_sample(
                prep.dataset, e.target_class, e.sample_index, cfg.seed);
            spec.target_sample = prep.dataset.train_images[sample];
            prep.specs.push_back(std::move(spec));
        }
        prep.eval_trigger = prep.specs[0].trigger;
        prep.eval_target = cfg.multi[0].target_class;
    }
    return prep;
}

struct TrainedEncoder {
    TinyEncoder encoder;
    std::vector<EpochLoss> trace;
    ParameterSet checkpoint;  // merged parameters for persistence
};

std::vector<Tensor> calibration_views(const Prepared& prep) {
    std::vector<Tensor> views(prep.dataset.train_images.size());
    parallel_for(views.size(), [&](std::size_t i) {
        views[i] = inference_view(prep.dataset.train_images[i], std::nullopt, prep.policy);
    });
    return views;
}

TrainedEncoder train_encoder(const ExperimentConfig& cfg, const Prepared& prep) {
    const std::uint64_t before_reads = prep.dataset.train_label_read_count();
    const std::vector<Tensor> calib = calibration_views(prep);
    TrainedEncoder out;
    if (cfg.method == "byol") {
        ByolModel model = ByolModel::create(ByolDims{}, hash_seed(cfg.seed, 0xb101ULL));
        calibrate_encoder_bias(model.online_encoder, calib);
        model.target_encoder.params.at("fc.b").value =
            model.online_encoder.params.at("fc.b").value;
        ByolTrainConfig tc;
        tc.epochs = cfg.epochs;
        tc.batch_size = cfg.batch;
        tc.lr = cfg.lr > 0.0 ? cfg.lr : 0.1;
        tc.momentum = cfg.momentum;
        tc.ema_start = cfg.ema_start;
        tc.ema_end = cfg.ema_end;
        tc.lambda10 = cfg.lambda10;
        tc.lambda20 = cfg.lambda20;
        tc.mode = cfg.mode;
        tc.attack = cfg.attack;
        tc.seed = cfg.seed;
        ByolTrainResult res = train_byol(model, prep.dataset, prep.specs, prep.policy, tc);
        out.encoder = model.online_encoder;
        out.trace = res.trace;
        out.checkpoint = model.merged_params();
    } else if (cfg.method == "moco") {
        MocoModel model =
            MocoModel::create(MocoDims{}, cfg.queue_capacity, cfg.moco_momentum_rate,
                              cfg.temperature, hash_seed(cfg.seed, 0x0c01ULL));
        calibrate_encoder_bias(model.query_encoder, calib);
        model.key_encoder.params.at("fc.b").value =
            model.query_encoder.params.at("fc.b").value;
        MocoTrainConfig tc;
        tc.epochs = cfg.epochs;
        tc.batch_size = cfg.batch;
        tc.lr = cfg.lr > 0.0 ? cfg.lr : 0.1;
        tc.momentum = cfg.momentum;
        tc.lambda10 = cfg.lambda10;
        tc.lambda20 = cfg.lambda20;
        tc.mode = cfg.mode;
        tc.attack = cfg.attack;
        tc.seed = cfg.seed;
        MocoTrainResult res = train_moco(model, prep.dataset, prep.specs, prep.policy, tc);
        out.encoder = model.query_encoder;
        out.trace = res.trace;
        out.checkpoint = ParameterSet();
        for (const std::string& name : model.query_encoder.params.names()) {
            out.checkpoint.add("query.encoder." + name,
                               model.query_encoder.params.at(name).value);
        }
        for (const std::string& name : model.query_projector.params.names()) {
            out.checkpoint.add("query.projector." + name,
                               model.query_projector.params.at(name).value);
        }
        for (const std::string& name : model.key_encoder.params.names()) {
            out.checkpoint.add("key.encoder." + name,
                               model.key_encoder.params.at(name).value);
        }
        for (const std::string& name : model.key_projector.params.names()) {
            out.checkpoint.add("key.projector." + name,
                               model.key_projector.params.at(name).value);
        }
    } else {
        throw ConfigError("method must be byol|moco, got '" + cfg.method + "'");
    }
    if (prep.dataset.train_label_read_count() != before_reads) {
        throw std::runtime_error("training read hidden train labels");
    }
    return out;
}

std::string format_double(double x) {
    std::ostringstream os;
    os.precision(10);
    os << x;
    return os.str();
}

}  // namespace

ExperimentConfig experiment_from_config(const KeyValueConfig& kv) {
    ExperimentConfig cfg;
    const std::string kind = kv.get_string("dataset.kind", "synth");
    if (kind == "cifar") {
        cfg.use_cifar = true;
        cfg.cifar_train = kv.get_string("dataset.cifar_train", "");
        cfg.cifar_test = kv.get_string("dataset.cifar_test", "");
        if (cfg.cifar_train.empty()) throw ConfigError("dataset.cifar_train is required");
    } else if (kind != "synth") {
        throw ConfigError("dataset.kind must be synth|cifar");
    }
    cfg.synth.classes = kv.get_uint("dataset.classes", 5);
    cfg.synth.per_class = kv.get_uint("dataset.per_class", 100);
    cfg.synth.image_size = kv.get_uint("dataset.image_size", 32);
    cfg.synth.seed = kv.get_uint("dataset.seed", 11);

    cfg.method = kv.get_string("method", "byol");
    cfg.attack = kv.get_bool("attack", true);
    cfg.mode = parse_mode(kv.get_string("poison.mode", "consistent"));
    cfg.variant = parse_variant(kv.get_string("loss.variant", "cascade"));

    cfg.trigger_seed = kv.get_uint("trigger.seed", 7);
    cfg.trigger_size = kv.get_uint("trigger.size", 6);
    if (kv.has("trigger.row")) cfg.trigger_row = kv.get_uint("trigger.row", 0);
    if (kv.has("trigger.col")) cfg.trigger_col = kv.get_uint("trigger.col", 0);
    cfg.target_class = static_cast<int>(kv.get_int("target.class", 0));
    cfg.target_sample_index = kv.get_uint("target.sample", 0);

    const std::size_t multi_count = kv.get_uint("multi.count", 0);
    for (std::size_t i = 0; i < multi_count; ++i) {
        const std::string p = "multi." + std::to_string(i) + ".";
        MultiTargetEntry e;
        if (!kv.has(p + "row") || !kv.has(p + "col") || !kv.has(p + "class")) {
            throw ConfigError("multi-target entry " + std::to_string(i) +
                              " needs row/col/class");
        }
        e.row = kv.get_uint(p + "row", 0);
        e.col = kv.get_uint(p + "col", 0);
        e.target_class = static_cast<int>(kv.get_int(p + "class", 0));
        e.sample_index = kv.get_uint(p + "sample", 0);
        cfg.multi.push_back(e);
    }

    cfg.epochs = kv.get_uint("train.epochs", 30);
    cfg.batch = kv.get_uint("train.batch", 25);
    cfg.lr = kv.get_double("train.lr", 0.0);
    cfg.momentum = kv.get_double("train.momentum", 0.9);
    cfg.ema_start = kv.get_double("train.ema_start", 0.99);
    cfg.ema_end = kv.get_double("train.ema_end", 1.0);
    cfg.moco_momentum_rate = kv.get_double("train.moco_momentum", 0.99);
    cfg.temperature = kv.get_double("train.temperature", 0.2);
    cfg.queue_capacity = kv.get_uint("train.queue_capacity", 256);
    cfg.lambda10 = kv.get_double("lambda.l10", 1.0);
    cfg.lambda20 = kv.get_double("lambda.l20", 1.0);

    cfg.crop_lo = kv.get_double("aug.crop_lo", 0.6);
    cfg.crop_hi = kv.get_double("aug.crop_hi", 1.0);
    cfg.flip_prob = kv.get_double("aug.flip_prob", 0.5);
    cfg.jitter = kv.get_double("aug.jitter", 0.1);

    cfg.defense_fraction = kv.get_double("defense.fraction", 0.25);
    cfg.defense_epochs = kv.get_uint("defense.epochs", 40);

    cfg.probe.hidden = kv.get_uint("probe.hidden", 32);
    cfg.probe.lr = kv.get_double("probe.lr", 0.01);
    cfg.probe.epochs = kv.get_uint("probe.epochs", 100);

    cfg.seed = kv.get_uint("seed", 1);
    cfg.fingerprint = kv.fingerprint();
    return cfg;
}

ResultRecord run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    ensure_dir(out_dir);
    Prepared prep = prepare(cfg);
    TrainedEncoder trained = train_encoder(cfg, prep);

    Probe probe = train_probe(trained.encoder, prep.dataset, prep.policy, cfg.probe,
                              hash_seed(cfg.seed, kProbeTag));
    ResultRecord record;
    record.config_hash = cfg.fingerprint.empty() ? "-" : cfg.fingerprint;
    record.seed = cfg.seed;
    record.method = cfg.method;
    record.poison_mode = poison_mode_name(cfg.mode);
    record.loss_variant = loss_variant_name(cfg.variant);
    record.sample_index = cfg.target_sample_index;
    record.acc = eval_acc(trained.encoder, probe, prep.dataset, prep.policy);

    AsrResult asr = eval_asr(trained.encoder, probe, prep.dataset, prep.policy,
                             prep.eval_trigger, prep.eval_target);
    record.asr = asr.asr;
    record.mistaken = mistaken_target(asr.histogram, prep.eval_target);
    if (prep.specs.size() > 1) {
        // Per-placement ASR against its own target (multi-target runs).
        for (std::size_t i = 0; i < prep.specs.size(); ++i) {
            AsrResult per = eval_asr(trained.encoder, probe, prep.dataset, prep.policy,
                                     prep.specs[i].trigger, cfg.multi[i].target_class);
            record.per_target_asr.push_back(per.asr);
        }
    }

    if (!out_dir.empty()) {
        save_checkpoint(join(out_dir, "checkpoint.bin"), trained.checkpoint);
        write_loss_trace(join(out_dir, "loss_trace.csv"), trained.trace);
        dump_representations(trained.encoder, prep.dataset.test_images,
                             prep.dataset.test_labels, prep.eval_trigger, prep.policy,
                             join(out_dir, "representations.txt"));
        EvalReport report;
        report.acc = record.acc;
        report.asr = record.asr;
        report.histogram = asr.histogram;
        report.mistaken = record.mistaken;
        report.config_fingerprint = record.config_hash;
        report.seed = cfg.seed;
        write_eval_report_kv(join(out_dir, "report.kv"), report);
    }

    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "[run] method=" << record.method << " mode=" << record.poison_mode
              << " variant=" << record.loss_variant << " seed=" << record.seed
              << " acc=" << record.acc << " asr=" << record.asr << " ("
              << format_double(record.wall_seconds) << "s)\n";
    return record;
}

std::vector<ResultRecord> run_ablation(const ExperimentConfig& base,
                                       const std::string& out_dir) {
    ensure_dir(out_dir);
    std::vector<ResultRecord> records;
    for (LossVariant variant : {LossVariant::Predictor, LossVariant::GlobalOnly,
                                LossVariant::LocalOnly, LossVariant::Cascade}) {
        ExperimentConfig cfg = base;
        cfg.variant = variant;
        const std::string sub =
            out_dir.empty() ? "" : join(out_dir, std::string("variant_") +
                                                     loss_variant_name(variant));
        records.push_back(run_experiment(cfg, sub));
    }
    if (!out_dir.empty()) {
        std::ofstream os(join(out_dir, "ablation.csv"));
        os << "loss_variant,acc,asr\n";
        for (const ResultRecord& r : records) {
            os << r.loss_variant << "," << format_double(r.acc) << ","
               << format_double(r.asr) << "\n";
        }
    }
    return records;
}

StabilitySummary run_stability_sweep(const ExperimentConfig& cfg, int target_class,
                                     std::size_t samples, const std::string& out_dir) {
    if (samples < 2) throw ConfigError("stability sweep needs at least 2 samples");
    ensure_dir(out_dir);
    StabilitySummary summary;
    for (std::size_t k = 0; k < samples; ++k) {
        ExperimentConfig run_cfg = cfg;
        run_cfg.target_class = target_class;
        run_cfg.target_sample_index = k;
        const std::string sub =
            out_dir.empty() ? "" : join(out_dir, "sample_" + std::to_string(k));
        ResultRecord r = run_experiment(run_cfg, sub);
        r.sample_index = k;
        summary.rows.push_back(std::move(r));
    }
    std::vector<double> asrs;
    for (const ResultRecord& r : summary.rows) {
        asrs.push_back(r.asr);
        if (!r.mistaken.has_value()) ++summary.mistaken_none;
    }
    std::sort(asrs.begin(), asrs.end());
    summary.min_asr = asrs.front();
    summary.median_asr = asrs[asrs.size() / 2];
    if (!out_dir.empty()) {
        std::ofstream os(join(out_dir, "stability.csv"));
        os << "sample_index,acc,asr,mistaken_target\n";
        for (const ResultRecord& r : summary.rows) {
            os << r.sample_index << "," << format_double(r.acc) << ","
               << format_double(r.asr) << ","
               << (r.mistaken.has_value() ? std::to_string(*r.mistaken) : "none") << "\n";
        }
    }
    return summary;
}

MultiTargetResult run_multitarget(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (cfg.multi.empty()) throw ConfigError("multi-target needs placement entries");
    ensure_dir(out_dir);
    Prepared prep = prepare(cfg);
    TrainedEncoder trained = train_encoder(cfg, prep);
    Probe probe = train_probe(trained.encoder, prep.dataset, prep.policy, cfg.probe,
                              hash_seed(cfg.seed, kProbeTag));
    const double acc = eval_acc(trained.encoder, probe, prep.dataset, prep.policy);

    MultiTargetResult result;
    const std::size_t m = cfg.multi.size();
    result.asr.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            AsrResult r = eval_asr(trained.encoder, probe, prep.dataset, prep.policy,
                                   prep.specs[i].trigger, cfg.multi[j].target_class);
            result.asr[i][j] = r.asr;
        }
        ResultRecord record;
        record.config_hash = cfg.fingerprint.empty() ? "-" : cfg.fingerprint;
        record.seed = cfg.seed;
        record.method = cfg.method;
        record.poison_mode = poison_mode_name(cfg.mode);
        record.loss_variant = loss_variant_name(cfg.variant);
        record.acc = acc;
        record.asr = result.asr[i][i];
        record.sample_index = i;
        for (std::size_t j = 0; j < m; ++j) record.per_target_asr.push_back(result.asr[i][j]);
        AsrResult own = eval_asr(trained.encoder, probe, prep.dataset, prep.policy,
                                 prep.specs[i].trigger, cfg.multi[i].target_class);
        record.mistaken = mistaken_target(own.histogram, cfg.multi[i].target_class);
        result.records.push_back(std::move(record));
    }

    if (!out_dir.empty()) {
        save_checkpoint(join(out_dir, "checkpoint.bin"), trained.checkpoint);
        write_loss_trace(join(out_dir, "loss_trace.csv"), trained.trace);
        std::ofstream os(join(out_dir, "multitarget.csv"));
        os << "placement";
        for (std::size_t j = 0; j < m; ++j) os << ",asr_vs_target_" << cfg.multi[j].target_class;
        os << "\n";
        for (std::size_t i = 0; i < m; ++i) {
            os << i;
            for (std::size_t j = 0; j < m; ++j) os << "," << format_double(result.asr[i][j]);
            os << "\n";
        }
    }
    return result;
}

DefenseOutcome run_defense(const ExperimentConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    Prepared prep = prepare(cfg);
    TrainedEncoder trained = train_encoder(cfg, prep);

    DistillConfig dc;
    dc.subset_fraction = cfg.defense_fraction;
    dc.epochs = cfg.defense_epochs;
    dc.seed = hash_seed(cfg.seed, 0xdef1ULL);
    auto [student, distill_result] = distill(trained.encoder, prep.dataset, prep.policy, dc);

    DefenseOutcome outcome;
    outcome.subset_fraction = cfg.defense_fraction;
    auto [teacher_report, student_report] =
        evaluate_defense(trained.encoder, student, prep.dataset, prep.policy,
                         prep.eval_trigger, prep.eval_target, cfg.probe,
                         hash_seed(cfg.seed, kProbeTag));
    outcome.teacher = teacher_report;
    outcome.student = student_report;

    if (!out_dir.empty()) {
        std::ofstream os(join(out_dir, "defense.csv"));
        os << "encoder,subset_fraction,acc,asr\n";
        os << "teacher," << format_double(cfg.defense_fraction) << ","
           << format_double(outcome.teacher.acc) << "," << format_double(outcome.teacher.asr)
           << "\n";
        os << "student," << format_double(cfg.defense_fraction) << ","
           << format_double(outcome.student.acc) << "," << format_double(outcome.student.asr)
           << "\n";
    }
    std::cout << "[defense] teacher acc=" << outcome.teacher.acc
              << " asr=" << outcome.teacher.asr << " | student acc=" << outcome.student.acc
              << " asr=" << outcome.student.asr << "\n";
    return outcome;
}

void emit_report(const std::vector<ResultRecord>& records, const std::string& dir) {
    ensure_dir(dir);
    std::ofstream csv(join(dir, "results.csv"));
    if (!csv) throw std::runtime_error("cannot write results.csv");
    csv << "config_hash,seed,method,poison_mode,loss_variant,acc,asr,mistaken_target,"
           "wall_seconds\n";
    for (const ResultRecord& r : records) {
        csv << r.config_hash << "," << r.seed << "," << r.method << "," << r.poison_mode
            << "," << r.loss_variant << "," << format_double(r.acc) << ","
            << format_double(r.asr) << ","
            << (r.mistaken.has_value() ? std::to_string(*r.mistaken) : "none")
            // Wall time is not reproducible, so the persisted record leaves
            // the field empty; timings go to the console log.
            << ",\n";
    }

    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const ResultRecord& r : records) {
        nlohmann::ordered_json row;
        row["config_hash"] = r.config_hash;
        row["seed"] = r.seed;
        row["method"] = r.method;
        row["poison_mode"] = r.poison_mode;
        row["loss_variant"] = r.loss_variant;
        row["acc"] = r.acc;
        row["asr"] = r.asr;
        if (r.mistaken.has_value()) {
            row["mistaken_target"] = *r.mistaken;
        } else {
            row["mistaken_target"] = nullptr;
        }
        row["wall_seconds"] = nullptr;
        if (!r.per_target_asr.empty()) row["per_target_asr"] = r.per_target_asr;
        doc.push_back(std::move(row));
    }
    std::ofstream js(join(dir, "results.json"));
    if (!js) throw std::runtime_error("cannot write results.json");
    js << doc.dump(2) << "\n";
}

void run_aq_sweep(const KeyValueConfig& kv, const std::string& out_dir) {
    ensure_dir(out_dir);
    const std::string sweep = kv.get_string("aq.sweep", "");
    if (sweep.empty()) throw ConfigError("aq.sweep is required (N:Nt:PN;...)");
    const std::uint64_t trials = kv.get_uint("aq.trials", 20000);
    const std::uint64_t seed = kv.get_uint("aq.seed", 1);

    std::ofstream os(join(out_dir, "aq.csv"));
    if (!os) throw std::runtime_error("cannot write aq.csv");
    os << "N,N_t,PN,AQ_exact,AQ_mc,stderr\n";
    std::istringstream entries(sweep);
    std::string entry;
    while (std::getline(entries, entry, ';')) {
        if (entry.find_first_not_of(" \t") == std::string::npos) continue;
        std::istringstream fields(entry);
        std::string a, b, c;
        if (!std::getline(fields, a, ':') || !std::getline(fields, b, ':') ||
            !std::getline(fields, c, ':')) {
            throw ConfigError("aq.sweep entry '" + entry + "' must be N:Nt:PN");
        }
        PoisonBudget budget;
        try {
            budget.corpus_size = std::stoull(a);
            budget.target_count = std::stoull(b);
            budget.required = std::stoull(c);
            budget.validate();
        } catch (const std::exception& e) {
            throw ConfigError("aq.sweep entry '" + entry + "': " + e.what());
        }
        const double exact = aq_exact(budget);
        MonteCarloResult mc = aq_montecarlo(budget, trials, seed);
        os << budget.corpus_size << "," << budget.target_count << "," << budget.required
           << "," << format_double(exact) << "," << format_double(mc.mean) << ","
           << format_double(mc.stderr_mean) << "\n";
    }
}

}  // namespace estas
