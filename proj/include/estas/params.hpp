#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "estas/tensor.hpp"

namespace estas {

struct Param {
    Tensor value;
    Tensor grad;       // same shape as value
    bool has_grad = false;  // set by accumulate_grad, cleared by zero_grads/sgd_step
};

// Ordered name -> (value, grad) map. Iteration always follows insertion
// order so optimizer updates and checkpoints are reproducible.
class ParameterSet {
public:
    Param& add(const std::string& name, Tensor init);

    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return order_.size(); }
    const std::vector<std::string>& names() const { return order_; }

    void accumulate_grad(const std::string& name, const Tensor& g, double scale);
    void zero_grads();

    // Sum over every parameter coordinate; used for frozenness checks.
    std::uint64_t value_checksum() const;

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Param> items_;
};

struct OptimizerState {
    double learning_rate = 0.0;
    double momentum = 0.0;
    // Velocity tensors mirror the parameter set they were built for.
    std::vector<std::string> names;
    std::unordered_map<std::string, Tensor> velocity;

    static OptimizerState for_params(const ParameterSet& params, double lr, double momentum);
};

// v <- momentum * v + grad ; w <- w - lr * v ; grads zeroed afterwards.
void sgd_step(ParameterSet& params, OptimizerState& opt);

// target <- rate * target + (1 - rate) * online, elementwise.
void ema_update(const ParameterSet& online, ParameterSet& target, double rate);

}  // namespace estas
