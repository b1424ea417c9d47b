#include "estas/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "estas/kernels.hpp"

namespace estas {

Tensor l2_normalize(const Tensor& v) {
    return kernels::l2_normalize_forward(v);
}

double normalized_mse(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) {
        throw std::invalid_argument("normalized_mse: dimension mismatch");
    }
    Tensor na = l2_normalize(a);
    Tensor nb = l2_normalize(b);
    double s = 0.0;
    for (std::size_t i = 0; i < na.numel(); ++i) {
        const double d = na.v[i] - nb.v[i];
        s += d * d;
    }
    return s;
}

double info_nce(const Tensor& q, const Tensor& k_pos,
                const std::vector<Tensor>& negatives, double temperature) {
    if (temperature <= 0.0) {
        throw std::invalid_argument("info_nce: temperature must be positive");
    }
    std::vector<double> logits;
    logits.reserve(1 + negatives.size());
    logits.push_back(dot(q, k_pos) / temperature);
    for (const Tensor& k : negatives) {
        logits.push_back(dot(q, k) / temperature);
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - m);
    // -log softmax of the positive term.
    return -(logits[0] - m) + std::log(denom);
}

}  // namespace estas
