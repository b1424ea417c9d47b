#include "estas/model.hpp"

#include <cmath>
#include <stdexcept>

#include "estas/kernels.hpp"

namespace estas {

Tensor init_weight(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& e : t.v) e = scale * rng.next_normal();
    return t;
}

TinyEncoder::TinyEncoder(std::size_t in_channels, std::size_t out_dim, std::uint64_t seed)
    : in_channels_(in_channels), out_dim_(out_dim) {
    Rng rng(seed);
    params.add("conv1.w", init_weight({kConv1Width, in_channels, kKernel, kKernel},
                                      in_channels * kKernel * kKernel, rng));
    params.add("conv1.b", Tensor::zeros({kConv1Width}));
    params.add("conv2.w", init_weight({kConv2Width, kConv1Width, kKernel, kKernel},
                                      kConv1Width * kKernel * kKernel, rng));
    params.add("conv2.b", Tensor::zeros({kConv2Width}));
    params.add("fc.w", init_weight({out_dim, kConv2Width}, kConv2Width, rng));
    params.add("fc.b", Tensor::zeros({out_dim}));
}

Tensor TinyEncoder::forward(const Tensor& image_chw) const {
    if (image_chw.rank() != 3 || image_chw.shape[0] != in_channels_) {
        throw std::invalid_argument("encoder input must be [C,H,W] with C=" +
                                    std::to_string(in_channels_));
    }
    Tensor h1 = kernels::relu_forward(kernels::conv2d_forward(
        image_chw, params.at("conv1.w").value, params.at("conv1.b").value, kStride, kPad));
    Tensor h2 = kernels::relu_forward(kernels::conv2d_forward(
        h1, params.at("conv2.w").value, params.at("conv2.b").value, kStride, kPad));
    Tensor pooled = kernels::global_avg_pool_forward(h2);
    return kernels::affine_forward(pooled, params.at("fc.w").value, params.at("fc.b").value);
}

Tape::NodeId TinyEncoder::forward_tape(Tape& tape, Tape::NodeId input) const {
    auto c1 = tape.relu(tape.conv2d(input, tape.param(params, "conv1.w"),
                                    tape.param(params, "conv1.b"), kStride, kPad));
    auto c2 = tape.relu(tape.conv2d(c1, tape.param(params, "conv2.w"),
                                    tape.param(params, "conv2.b"), kStride, kPad));
    auto pooled = tape.global_avg_pool(c2);
    return tape.affine(pooled, tape.param(params, "fc.w"), tape.param(params, "fc.b"));
}

Tensor TinyEncoder::pooled_features(const Tensor& image_chw) const {
    Tensor h1 = kernels::relu_forward(kernels::conv2d_forward(
        image_chw, params.at("conv1.w").value, params.at("conv1.b").value, kStride, kPad));
    Tensor h2 = kernels::relu_forward(kernels::conv2d_forward(
        h1, params.at("conv2.w").value, params.at("conv2.b").value, kStride, kPad));
    return kernels::global_avg_pool_forward(h2);
}

void calibrate_encoder_bias(TinyEncoder& encoder, const std::vector<Tensor>& views) {
    if (views.empty()) throw std::invalid_argument("calibrate_encoder_bias: no views");
    Tensor mean = encoder.pooled_features(views[0]);
    for (std::size_t i = 1; i < views.size(); ++i) {
        Tensor f = encoder.pooled_features(views[i]);
        for (std::size_t j = 0; j < mean.numel(); ++j) mean.v[j] += f.v[j];
    }
    for (double& x : mean.v) x /= static_cast<double>(views.size());

    const Tensor& w = encoder.params.at("fc.w").value;
    Tensor& b = encoder.params.at("fc.b").value;
    const std::size_t out = w.shape[0], in = w.shape[1];
    for (std::size_t o = 0; o < out; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < in; ++i) s += w.v[o * in + i] * mean.v[i];
        b.v[o] = -s;
    }
}

MlpHead::MlpHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim,
                 std::uint64_t seed)
    : in_dim_(in_dim), hidden_dim_(hidden_dim), out_dim_(out_dim) {
    Rng rng(seed);
    params.add("l1.w", init_weight({hidden_dim, in_dim}, in_dim, rng));
    // Positive hidden bias keeps most rectifier units active at init, so a
    // freshly built head is close to linear and passes input diversity
    // through instead of flattening it.
    Tensor b1 = Tensor::zeros({hidden_dim});
    b1.fill(0.3);
    params.add("l1.b", std::move(b1));
    params.add("l2.w", init_weight({out_dim, hidden_dim}, hidden_dim, rng));
    params.add("l2.b", Tensor::zeros({out_dim}));
}

Tensor MlpHead::forward(const Tensor& x) const {
    Tensor h = kernels::relu_forward(
        kernels::affine_forward(x, params.at("l1.w").value, params.at("l1.b").value));
    return kernels::affine_forward(h, params.at("l2.w").value, params.at("l2.b").value);
}

Tape::NodeId MlpHead::forward_tape(Tape& tape, Tape::NodeId input) const {
    auto h = tape.relu(tape.affine(input, tape.param(params, "l1.w"),
                                   tape.param(params, "l1.b")));
    return tape.affine(h, tape.param(params, "l2.w"), tape.param(params, "l2.b"));
}

}  // namespace estas
