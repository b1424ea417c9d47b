#include "estas/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace estas::kernels {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(what) + ": expected rank " +
                                    std::to_string(rank) + ", got " +
                                    shape_to_string(t.shape));
    }
}

}  // namespace

Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 1, "affine input");
    require_rank(w, 2, "affine weight");
    require_rank(b, 1, "affine bias");
    const std::size_t out = w.shape[0];
    const std::size_t in = w.shape[1];
    if (x.shape[0] != in || b.shape[0] != out) {
        throw std::invalid_argument("affine: dimension mismatch");
    }
    Tensor y = Tensor::zeros({out});
    for (std::size_t o = 0; o < out; ++o) {
        double s = b.v[o];
        const double* wrow = &w.v[o * in];
        for (std::size_t i = 0; i < in; ++i) s += wrow[i] * x.v[i];
        y.v[o] = s;
    }
    return y;
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     Tensor& gx, Tensor& gw, Tensor& gb) {
    const std::size_t out = w.shape[0];
    const std::size_t in = w.shape[1];
    for (std::size_t o = 0; o < out; ++o) {
        const double g = gy.v[o];
        gb.v[o] += g;
        const double* wrow = &w.v[o * in];
        double* gwrow = &gw.v[o * in];
        for (std::size_t i = 0; i < in; ++i) {
            gwrow[i] += g * x.v[i];
            gx.v[i] += g * wrow[i];
        }
    }
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                      std::size_t stride, std::size_t pad) {
    require_rank(x, 3, "conv input");
    require_rank(w, 4, "conv weight");
    require_rank(b, 1, "conv bias");
    const std::size_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const std::size_t cout = w.shape[0], k = w.shape[2];
    if (w.shape[1] != cin || w.shape[3] != k || b.shape[0] != cout) {
        throw std::invalid_argument("conv2d: dimension mismatch");
    }
    if (h + 2 * pad < k || wd + 2 * pad < k) {
        throw std::invalid_argument("conv2d: input smaller than kernel");
    }
    const std::size_t oh = (h + 2 * pad - k) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - k) / stride + 1;
    Tensor y = Tensor::zeros({cout, oh, ow});
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double s = b.v[co];
                const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                           static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                           static_cast<std::ptrdiff_t>(pad);
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* xplane = &x.v[ci * h * wd];
                    const double* wplane = &w.v[((co * cin) + ci) * k * k];
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            s += wplane[ky * k + kx] * xplane[iy * wd + ix];
                        }
                    }
                }
                y.v[(co * oh + oy) * ow + ox] = s;
            }
        }
    }
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                     std::size_t stride, std::size_t pad,
                     Tensor& gx, Tensor& gw, Tensor& gb) {
    const std::size_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const std::size_t cout = w.shape[0], k = w.shape[2];
    const std::size_t oh = gy.shape[1], ow = gy.shape[2];
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double g = gy.v[(co * oh + oy) * ow + ox];
                if (g == 0.0) continue;
                gb.v[co] += g;
                const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                           static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                           static_cast<std::ptrdiff_t>(pad);
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* xplane = &x.v[ci * h * wd];
                    double* gxplane = &gx.v[ci * h * wd];
                    const double* wplane = &w.v[((co * cin) + ci) * k * k];
                    double* gwplane = &gw.v[((co * cin) + ci) * k * k];
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            gwplane[ky * k + kx] += g * xplane[iy * wd + ix];
                            gxplane[iy * wd + ix] += g * wplane[ky * k + kx];
                        }
                    }
                }
            }
        }
    }
}

Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& e : y.v) {
        if (e < 0.0) e = 0.0;
    }
    return y;
}

void relu_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    for (std::size_t i = 0; i < x.numel(); ++i) {
        if (x.v[i] > 0.0) gx.v[i] += gy.v[i];
    }
}

Tensor global_avg_pool_forward(const Tensor& x) {
    require_rank(x, 3, "pool input");
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor y = Tensor::zeros({c});
    const double inv = 1.0 / static_cast<double>(h * w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        double s = 0.0;
        const double* plane = &x.v[ci * h * w];
        for (std::size_t i = 0; i < h * w; ++i) s += plane[i];
        y.v[ci] = s * inv;
    }
    return y;
}

void global_avg_pool_backward(const Tensor& x, const Tensor& gy, Tensor& gx) {
    const std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    const double inv = 1.0 / static_cast<double>(h * w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double g = gy.v[ci] * inv;
        double* plane = &gx.v[ci * h * w];
        for (std::size_t i = 0; i < h * w; ++i) plane[i] += g;
    }
}

Tensor l2_normalize_forward(const Tensor& x) {
    require_rank(x, 1, "normalize input");
    const double n = norm2(x);
    if (n == 0.0) throw std::runtime_error("degenerate representation");
    Tensor y = x;
    const double inv = 1.0 / n;
    for (double& e : y.v) e *= inv;
    return y;
}

void l2_normalize_backward(const Tensor& x, const Tensor& y, const Tensor& gy, Tensor& gx) {
    // d(x/||x||)/dx = (I - y y^T) / ||x||
    const double n = norm2(x);
    const double inv = 1.0 / n;
    const double proj = dot(y, gy);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        gx.v[i] += (gy.v[i] - y.v[i] * proj) * inv;
    }
}

}  // namespace estas::kernels
