#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace estas {

// Dense row-major array of doubles. Rank-1 vectors carry representations,
// rank-2 affine weights, rank-3 activations ([C,H,W]) and rank-4 conv
// weights ([Cout,Cin,K,K]).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> values);

    static Tensor zeros(std::vector<std::size_t> s);
    static Tensor vec(std::vector<double> values);
    static Tensor scalar(double x);

    std::size_t numel() const { return v.size(); }
    std::size_t rank() const { return shape.size(); }

    double& at(std::size_t i) { return v[i]; }
    double at(std::size_t i) const { return v[i]; }

    void fill(double x);
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

// Throws if any value is NaN or infinite. `context` names the offending
// tensor in the error message.
void require_finite(const Tensor& t, const std::string& context);

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);

}  // namespace estas
