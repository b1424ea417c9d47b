#pragma once

#include <cstddef>

#include "estas/tensor.hpp"

namespace estas::kernels {

// y[out] = b[out] + sum_i W[out,in] x[in]
Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor& b);
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     Tensor& gx, Tensor& gw, Tensor& gb);

// x: [Cin,H,W], w: [Cout,Cin,K,K], b: [Cout]; zero padding.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                      std::size_t stride, std::size_t pad);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     std::size_t stride, std::size_t pad,
                     Tensor& gx, Tensor& gw, Tensor& gb);

Tensor relu_forward(const Tensor& x);
void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx);

// [C,H,W] -> [C], spatial mean per channel.
Tensor global_avg_pool_forward(const Tensor& x);
void global_avg_pool_backward(const Tensor& x, const Tensor& gy, Tensor& gx);

// y = x / ||x||; throws on zero norm.
Tensor l2_normalize_forward(const Tensor& x);
void l2_normalize_backward(const Tensor& x, const Tensor& y, const Tensor& gy, Tensor& gx);

}  // namespace estas::kernels
