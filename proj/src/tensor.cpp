#include "estas/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace estas {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> values)
    : shape(std::move(s)), v(std::move(values)) {
    if (shape_numel(shape) != v.size()) {
        throw std::invalid_argument("tensor shape " + shape_to_string(shape) +
                                    " does not match " + std::to_string(v.size()) +
                                    " values");
    }
    for (std::size_t d : shape) {
        if (d == 0) throw std::invalid_argument("tensor dimension must be positive");
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> s) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::vec(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::scalar(double x) {
    return Tensor({1}, {x});
}

void Tensor::fill(double x) {
    for (double& e : v) e = x;
}

void require_finite(const Tensor& t, const std::string& context) {
    for (double e : t.v) {
        if (!std::isfinite(e)) {
            throw std::runtime_error("non-finite value in " + context);
        }
    }
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) {
        throw std::invalid_argument("dot: size mismatch " + shape_to_string(a.shape) +
                                    " vs " + shape_to_string(b.shape));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.v[i] * b.v[i];
    return s;
}

double norm2(const Tensor& a) {
    return std::sqrt(dot(a, a));
}

}  // namespace estas
