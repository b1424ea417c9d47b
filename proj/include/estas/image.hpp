#pragma once

#include <cstddef>
#include <vector>

#include "estas/tensor.hpp"

namespace estas {

// Channel-major pixel container, values in [0,1] before normalization.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> pix;  // [c][y][x]

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c)
        : height(h), width(w), channels(c), pix(h * w * c, 0.0) {}

    double& at(std::size_t c, std::size_t y, std::size_t x) {
        return pix[(c * height + y) * width + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return pix[(c * height + y) * width + x];
    }
    std::size_t numel() const { return pix.size(); }
};

// Square patch stamped at a fixed (row, col) of the view.
struct Trigger {
    Image patch;
    std::size_t row = 0;
    std::size_t col = 0;

    std::size_t size() const { return patch.height; }
};

struct AugmentationPolicy {
    std::size_t out_h = 32;
    std::size_t out_w = 32;
    double area_lo = 1.0;   // crop area fraction range
    double area_hi = 1.0;
    double flip_prob = 0.0;
    double jitter = 0.0;    // brightness shift half-range
    double mean[3] = {0.0, 0.0, 0.0};
    double stdev[3] = {1.0, 1.0, 1.0};

    void validate() const;
};

}  // namespace estas
