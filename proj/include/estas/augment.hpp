#pragma once

#include <cstdint>
#include <optional>

#include "estas/image.hpp"
#include "estas/rng.hpp"
#include "estas/tensor.hpp"

namespace estas {

// Align-corners bilinear resampling; preserves constants exactly and is
// exact on per-axis linear ramps.
Image bilinear_resize(const Image& img, std::size_t out_h, std::size_t out_w);

// Random uniform 4x4 RGB patch resized to size x size.
Image generate_trigger_patch(std::uint64_t seed, std::size_t size);
Trigger make_trigger(std::uint64_t seed, std::size_t size, std::size_t row, std::size_t col);

// Random resized crop (source aspect ratio kept), horizontal flip,
// brightness jitter, clamp. Consumes a fixed number of draws from `rng`.
Image augment(const Image& img, const AugmentationPolicy& policy, Rng& rng);

// Overwrites the patch region; everything else untouched.
Image patch_trigger(const Image& img, const Trigger& trig);

// Per-channel (pixel - mean) / std as a [C,H,W] tensor.
Tensor normalize_view(const Image& img, const AugmentationPolicy& policy);
// pixel * std + mean; exact inverse of the affine normalization.
Image inverse_normalize(const Tensor& view, const AugmentationPolicy& policy);

// Trigger stamped on the augmented view, before normalization: the trigger
// the encoder sees in training is the trigger it sees at inference.
Tensor poison_consistent(const Image& img, const Trigger& trig,
                         const AugmentationPolicy& policy, Rng& rng);
// Trigger stamped on the source image, then augmented: cropping and
// resizing may clip or rescale it.
Tensor poison_inconsistent(const Image& img, const Trigger& trig,
                           const AugmentationPolicy& policy, Rng& rng);

// Deterministic evaluation view: resize, optional trigger, normalize.
Tensor inference_view(const Image& img, const std::optional<Trigger>& trig,
                      const AugmentationPolicy& policy);

}  // namespace estas
