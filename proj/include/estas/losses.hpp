#pragma once

#include <vector>

#include "estas/tensor.hpp"

namespace estas {

// Unit-norm copy of a rank-1 tensor. Throws "degenerate representation" on
// zero input.
Tensor l2_normalize(const Tensor& v);

// ||a/||a|| - b/||b||||^2. Algebraically equal to 2 - 2*cos(a,b).
double normalized_mse(const Tensor& a, const Tensor& b);

// -log( exp(q.k+/t) / (exp(q.k+/t) + sum_j exp(q.k-_j/t)) ), max-subtracted.
// Dot products are taken on the vectors as given; normalize first if unit
// vectors are wanted. An empty negative set is allowed.
double info_nce(const Tensor& q, const Tensor& k_pos,
                const std::vector<Tensor>& negatives, double temperature);

}  // namespace estas
