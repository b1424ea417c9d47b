#include "estas/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace estas {

void AugmentationPolicy::validate() const {
    if (!(area_lo > 0.0) || area_lo > area_hi || area_hi > 1.0) {
        throw std::invalid_argument("augmentation: need 0 < area_lo <= area_hi <= 1");
    }
    if (jitter < 0.0 || jitter >= 1.0) {
        throw std::invalid_argument("augmentation: jitter half-range must lie in [0,1)");
    }
    if (flip_prob < 0.0 || flip_prob > 1.0) {
        throw std::invalid_argument("augmentation: flip probability must lie in [0,1]");
    }
    for (double s : stdev) {
        if (!(s > 0.0)) throw std::invalid_argument("augmentation: std must be positive");
    }
    if (out_h == 0 || out_w == 0) {
        throw std::invalid_argument("augmentation: output size must be positive");
    }
}

Image bilinear_resize(const Image& img, std::size_t out_h, std::size_t out_w) {
    if (out_h < 1 || out_w < 1 || img.height < 1 || img.width < 1) {
        throw std::invalid_argument("bilinear_resize: dimensions must be >= 1");
    }
    Image out(out_h, out_w, img.channels);
    const std::size_t h = img.height, w = img.width;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const double sy = (out_h > 1)
                              ? static_cast<double>(oy) * static_cast<double>(h - 1) /
                                    static_cast<double>(out_h - 1)
                              : static_cast<double>(h - 1) / 2.0;
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const double sx = (out_w > 1)
                                  ? static_cast<double>(ox) * static_cast<double>(w - 1) /
                                        static_cast<double>(out_w - 1)
                                  : static_cast<double>(w - 1) / 2.0;
            const std::size_t x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = sx - static_cast<double>(x0);
            for (std::size_t c = 0; c < img.channels; ++c) {
                const double v00 = img.at(c, y0, x0);
                const double v01 = img.at(c, y0, x1);
                const double v10 = img.at(c, y1, x0);
                const double v11 = img.at(c, y1, x1);
                // v_lo + f*(v_hi - v_lo) keeps constants and ramps exact.
                const double top = v00 + fx * (v01 - v00);
                const double bot = v10 + fx * (v11 - v10);
                out.at(c, oy, ox) = top + fy * (bot - top);
            }
        }
    }
    return out;
}

Image generate_trigger_patch(std::uint64_t seed, std::size_t size) {
    if (size < 1) throw std::invalid_argument("trigger size must be >= 1");
    Rng rng(seed);
    Image base(4, 4, 3);
    for (double& p : base.pix) p = rng.next_double();
    if (size == 4) return base;
    return bilinear_resize(base, size, size);
}

Trigger make_trigger(std::uint64_t seed, std::size_t size, std::size_t row,
                     std::size_t col) {
    Trigger t;
    t.patch = generate_trigger_patch(seed, size);
    t.row = row;
    t.col = col;
    return t;
}

Image augment(const Image& img, const AugmentationPolicy& policy, Rng& rng) {
    policy.validate();
    if (img.height < 2 || img.width < 2) {
        throw std::invalid_argument("augment: image must be at least 2x2");
    }
    // Fixed draw order: area, top, left, flip, brightness.
    const double area = rng.next_range(policy.area_lo, policy.area_hi);
    const double side = std::sqrt(area);
    const std::size_t crop_h = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(side * static_cast<double>(img.height))), 1,
        img.height);
    const std::size_t crop_w = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(side * static_cast<double>(img.width))), 1,
        img.width);
    const std::size_t top = rng.next_below(img.height - crop_h + 1);
    const std::size_t left = rng.next_below(img.width - crop_w + 1);
    const bool flip = rng.next_double() < policy.flip_prob;
    const double shift = rng.next_range(-policy.jitter, policy.jitter);

    Image cropped(crop_h, crop_w, img.channels);
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t y = 0; y < crop_h; ++y) {
            for (std::size_t x = 0; x < crop_w; ++x) {
                cropped.at(c, y, x) = img.at(c, top + y, left + x);
            }
        }
    }
    Image out = bilinear_resize(cropped, policy.out_h, policy.out_w);
    if (flip) {
        for (std::size_t c = 0; c < out.channels; ++c) {
            for (std::size_t y = 0; y < out.height; ++y) {
                for (std::size_t x = 0; x < out.width / 2; ++x) {
                    std::swap(out.at(c, y, x), out.at(c, y, out.width - 1 - x));
                }
            }
        }
    }
    for (double& p : out.pix) {
        p = std::clamp(p + shift, 0.0, 1.0);
    }
    return out;
}

Image patch_trigger(const Image& img, const Trigger& trig) {
    const std::size_t s = trig.size();
    if (trig.patch.width != s || trig.patch.channels != img.channels) {
        throw std::invalid_argument("patch_trigger: malformed trigger patch");
    }
    if (trig.row + s > img.height || trig.col + s > img.width) {
        throw std::invalid_argument("patch_trigger: placement out of bounds");
    }
    Image out = img;
    for (std::size_t c = 0; c < img.channels; ++c) {
        for (std::size_t y = 0; y < s; ++y) {
            for (std::size_t x = 0; x < s; ++x) {
                out.at(c, trig.row + y, trig.col + x) = trig.patch.at(c, y, x);
            }
        }
    }
    return out;
}

Tensor normalize_view(const Image& img, const AugmentationPolicy& policy) {
    Tensor t = Tensor::zeros({img.channels, img.height, img.width});
    const std::size_t plane = img.height * img.width;
    for (std::size_t c = 0; c < img.channels; ++c) {
        const double m = policy.mean[c % 3];
        const double inv = 1.0 / policy.stdev[c % 3];
        for (std::size_t i = 0; i < plane; ++i) {
            t.v[c * plane + i] = (img.pix[c * plane + i] - m) * inv;
        }
    }
    return t;
}

Image inverse_normalize(const Tensor& view, const AugmentationPolicy& policy) {
    if (view.rank() != 3) throw std::invalid_argument("inverse_normalize: need [C,H,W]");
    Image img(view.shape[1], view.shape[2], view.shape[0]);
    const std::size_t plane = img.height * img.width;
    for (std::size_t c = 0; c < img.channels; ++c) {
        const double m = policy.mean[c % 3];
        const double s = policy.stdev[c % 3];
        for (std::size_t i = 0; i < plane; ++i) {
            img.pix[c * plane + i] = view.v[c * plane + i] * s + m;
        }
    }
    return img;
}

Tensor poison_consistent(const Image& img, const Trigger& trig,
                         const AugmentationPolicy& policy, Rng& rng) {
    Image view = augment(img, policy, rng);
    return normalize_view(patch_trigger(view, trig), policy);
}

Tensor poison_inconsistent(const Image& img, const Trigger& trig,
                           const AugmentationPolicy& policy, Rng& rng) {
    return normalize_view(augment(patch_trigger(img, trig), policy, rng), policy);
}

Tensor inference_view(const Image& img, const std::optional<Trigger>& trig,
                      const AugmentationPolicy& policy) {
    Image view = (img.height == policy.out_h && img.width == policy.out_w)
                     ? img
                     : bilinear_resize(img, policy.out_h, policy.out_w);
    if (trig.has_value()) {
        view = patch_trigger(view, *trig);
    }
    return normalize_view(view, policy);
}

}  // namespace estas
