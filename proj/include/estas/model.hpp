#pragma once

#include <cstdint>
#include <cstddef>

#include "estas/params.hpp"
#include "estas/rng.hpp"
#include "estas/tape.hpp"
#include "estas/tensor.hpp"

namespace estas {

// Two 3x3 stride-2 convolutions (widths 8 and 16), rectifier after each,
// global average pooling, one affine layer to the output dimension. Small
// enough to train in seconds yet keeps spatial locality, so a patch's
// position still shows in the pooled features.
class TinyEncoder {
public:
    static constexpr std::size_t kConv1Width = 8;
    static constexpr std::size_t kConv2Width = 16;
    static constexpr std::size_t kKernel = 3;
    static constexpr std::size_t kStride = 2;
    static constexpr std::size_t kPad = 1;

    TinyEncoder() = default;
    TinyEncoder(std::size_t in_channels, std::size_t out_dim, std::uint64_t seed);

    Tensor forward(const Tensor& image_chw) const;
    Tape::NodeId forward_tape(Tape& tape, Tape::NodeId input) const;

    // Pooled features just before the output affine layer.
    Tensor pooled_features(const Tensor& image_chw) const;

    std::size_t out_dim() const { return out_dim_; }
    std::size_t in_channels() const { return in_channels_; }

    ParameterSet params;

private:
    std::size_t in_channels_ = 3;
    std::size_t out_dim_ = 32;
};

// Two affine layers with one rectifier in between.
class MlpHead {
public:
    MlpHead() = default;
    MlpHead(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim,
            std::uint64_t seed);

    Tensor forward(const Tensor& x) const;
    Tape::NodeId forward_tape(Tape& tape, Tape::NodeId input) const;

    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }

    ParameterSet params;

private:
    std::size_t in_dim_ = 0;
    std::size_t hidden_dim_ = 0;
    std::size_t out_dim_ = 0;
};

// He-style fan-in init used by both modules.
Tensor init_weight(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng);

// Data-dependent init: sets the output bias to -W * mean(pooled features)
// over the given views, so fresh representations are centered and their
// directions spread instead of bunching around a dominant mean. A one-off
// calibration, constant afterwards, identical in train and eval.
void calibrate_encoder_bias(TinyEncoder& encoder, const std::vector<Tensor>& views);

}  // namespace estas
