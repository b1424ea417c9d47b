#include "estas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "estas/rng.hpp"

namespace estas {

namespace {

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const double m = v - c;
    rgb[0] = r + m;
    rgb[1] = g + m;
    rgb[2] = b + m;
}

Image synth_image(std::size_t cls, std::size_t classes, std::size_t size, Rng& rng) {
    // Muted palette: classes stay linearly separable, but no single class
    // cue dominates the image the way a saturated foreign patch does.
    double base[3];
    hsv_to_rgb(0.61803398875 * static_cast<double>(cls), 0.25, 0.55, base);
    const double theta = 3.14159265358979 * static_cast<double>(cls) /
                         static_cast<double>(classes);
    const double ct = std::cos(theta), st = std::sin(theta);
    // Blob centre scattered per class.
    const std::uint64_t ch = hash_seed(0x5eedb10bULL, cls);
    const double bx = (0.2 + 0.6 * static_cast<double>(ch % 997) / 996.0) *
                      static_cast<double>(size);
    const double by = (0.2 + 0.6 * static_cast<double>((ch / 997) % 997) / 996.0) *
                      static_cast<double>(size);
    const double blob_r = static_cast<double>(size) / 6.0;

    Image img(size, size, 3);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            // One smooth cycle across the image: orientation separates the
            // classes without adding high-frequency texture.
            const double proj = (static_cast<double>(x) * ct + static_cast<double>(y) * st);
            const double stripe =
                0.08 * std::sin(proj * 6.28318530718 / static_cast<double>(size));
            const double dx = static_cast<double>(x) - bx;
            const double dy = static_cast<double>(y) - by;
            const bool in_blob = dx * dx + dy * dy < blob_r * blob_r;
            for (std::size_t c = 0; c < 3; ++c) {
                double v = base[c] + stripe;
                if (in_blob) v = base[c] + (0.5 - base[c]) * 0.8 + (c == cls % 3 ? 0.12 : 0.0);
                v += rng.next_range(-0.05, 0.05);
                img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return img;
}

}  // namespace

LabeledDataset synth_dataset(const SynthSpec& spec) {
    if (spec.classes < 2) throw std::invalid_argument("synth_dataset: need K >= 2");
    if (spec.per_class < 1) throw std::invalid_argument("synth_dataset: empty class");
    if (spec.image_size < 8) throw std::invalid_argument("synth_dataset: image too small");

    LabeledDataset ds;
    ds.num_classes = spec.classes;

    std::vector<Image> pool;
    std::vector<int> pool_labels;
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            Rng rng(hash_seed(spec.seed, 0x7261696eULL, c, i));
            pool.push_back(synth_image(c, spec.classes, spec.image_size, rng));
            pool_labels.push_back(static_cast<int>(c));
        }
    }

    // Probe split: 1% of the train pool, at least one image per class,
    // removed from the pool so the encoder never trains on them.
    const std::size_t pool_n = pool.size();
    const std::size_t probe_n = std::max<std::size_t>(
        static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(pool_n))),
        spec.classes);
    std::vector<std::size_t> probe_idx;
    Rng pick(hash_seed(spec.seed, 0x70726f6265ULL));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        probe_idx.push_back(c * spec.per_class + pick.next_below(spec.per_class));
    }
    while (probe_idx.size() < probe_n) {
        std::size_t cand = pick.next_below(pool_n);
        if (std::find(probe_idx.begin(), probe_idx.end(), cand) == probe_idx.end()) {
            probe_idx.push_back(cand);
        }
    }
    std::sort(probe_idx.begin(), probe_idx.end());

    std::vector<int> train_labels;
    std::size_t next_probe = 0;
    for (std::size_t i = 0; i < pool_n; ++i) {
        if (next_probe < probe_idx.size() && probe_idx[next_probe] == i) {
            ds.probe_images.push_back(pool[i]);
            ds.probe_labels.push_back(pool_labels[i]);
            ++next_probe;
        } else {
            ds.train_images.push_back(pool[i]);
            train_labels.push_back(pool_labels[i]);
        }
    }
    ds.set_train_labels(std::move(train_labels));

    const std::size_t test_per_class = std::max<std::size_t>(10, spec.per_class / 5);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        for (std::size_t i = 0; i < test_per_class; ++i) {
            Rng rng(hash_seed(spec.seed, 0x74657374ULL, c, i));
            ds.test_images.push_back(synth_image(c, spec.classes, spec.image_size, rng));
            ds.test_labels.push_back(static_cast<int>(c));
        }
    }
    return ds;
}

void write_synth_manifest(const std::string& path, const SynthSpec& spec) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << "seed = " << spec.seed << "\n";
    os << "classes = " << spec.classes << "\n";
    os << "per_class = " << spec.per_class << "\n";
    os << "image_size = " << spec.image_size << "\n";
}

SynthSpec read_synth_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    SynthSpec spec;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string key, eq;
        std::uint64_t value;
        if (!(ls >> key >> eq >> value) || eq != "=") continue;
        if (key == "seed") spec.seed = value;
        else if (key == "classes") spec.classes = value;
        else if (key == "per_class") spec.per_class = value;
        else if (key == "image_size") spec.image_size = value;
        else throw std::runtime_error("manifest: unknown key '" + key + "'");
    }
    return spec;
}

LabeledDataset read_cifar_binary(const std::string& path) {
    constexpr std::size_t kRecord = 3073;
    constexpr std::size_t kSide = 32;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    is.seekg(0, std::ios::end);
    const auto len = static_cast<std::size_t>(is.tellg());
    is.seekg(0, std::ios::beg);
    if (len % kRecord != 0) {
        throw std::runtime_error("cifar file '" + path + "' is not a multiple of 3073 bytes");
    }

    LabeledDataset ds;
    ds.num_classes = 10;
    std::vector<int> labels;
    std::vector<unsigned char> rec(kRecord);
    const std::size_t count = len / kRecord;
    for (std::size_t r = 0; r < count; ++r) {
        is.read(reinterpret_cast<char*>(rec.data()), kRecord);
        if (!is) throw std::runtime_error("cifar file '" + path + "': truncated record");
        const int label = rec[0];
        if (label >= 10) {
            throw std::runtime_error("cifar file '" + path + "': label out of range");
        }
        Image img(kSide, kSide, 3);
        for (std::size_t i = 0; i < 3 * kSide * kSide; ++i) {
            img.pix[i] = static_cast<double>(rec[1 + i]) / 255.0;
        }
        ds.train_images.push_back(std::move(img));
        labels.push_back(label);
    }
    ds.set_train_labels(std::move(labels));
    return ds;
}

void compute_norm_stats(const LabeledDataset& ds, double mean[3], double stdev[3]) {
    if (ds.train_images.empty()) throw std::invalid_argument("norm stats: empty train split");
    double sum[3] = {0, 0, 0};
    double sum2[3] = {0, 0, 0};
    std::size_t count = 0;
    for (const Image& img : ds.train_images) {
        const std::size_t plane = img.height * img.width;
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
                const double p = img.pix[c * plane + i];
                sum[c] += p;
                sum2[c] += p * p;
            }
        }
        count += plane;
    }
    for (std::size_t c = 0; c < 3; ++c) {
        mean[c] = sum[c] / static_cast<double>(count);
        const double var = std::max(sum2[c] / static_cast<double>(count) - mean[c] * mean[c],
                                    1e-8);
        stdev[c] = std::sqrt(var);
    }
}

}  // namespace estas
