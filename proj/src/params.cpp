#include "estas/params.hpp"

#include <cstring>
#include <stdexcept>

namespace estas {

Param& ParameterSet::add(const std::string& name, Tensor init) {
    if (contains(name)) {
        throw std::invalid_argument("duplicate parameter '" + name + "'");
    }
    Param p;
    p.grad = Tensor::zeros(init.shape);
    p.value = std::move(init);
    index_[name] = items_.size();
    order_.push_back(name);
    items_.push_back(std::move(p));
    return items_.back();
}

Param& ParameterSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::invalid_argument("unknown parameter '" + name + "'");
    }
    return items_[it->second];
}

const Param& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw std::invalid_argument("unknown parameter '" + name + "'");
    }
    return items_[it->second];
}

bool ParameterSet::contains(const std::string& name) const {
    return index_.find(name) != index_.end();
}

void ParameterSet::accumulate_grad(const std::string& name, const Tensor& g, double scale) {
    Param& p = at(name);
    if (!p.grad.same_shape(g)) {
        throw std::invalid_argument("gradient shape mismatch for '" + name + "'");
    }
    for (std::size_t i = 0; i < g.numel(); ++i) {
        p.grad.v[i] += scale * g.v[i];
    }
    p.has_grad = true;
}

void ParameterSet::zero_grads() {
    for (Param& p : items_) {
        p.grad.fill(0.0);
        p.has_grad = false;
    }
}

std::uint64_t ParameterSet::value_checksum() const {
    // FNV-1a over the raw value bytes in insertion order.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* data, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const std::string& name : order_) {
        mix_bytes(name.data(), name.size());
        const Tensor& t = at(name).value;
        mix_bytes(t.v.data(), t.v.size() * sizeof(double));
    }
    return h;
}

OptimizerState OptimizerState::for_params(const ParameterSet& params, double lr,
                                          double momentum) {
    if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("momentum must lie in [0,1)");
    }
    OptimizerState opt;
    opt.learning_rate = lr;
    opt.momentum = momentum;
    for (const std::string& name : params.names()) {
        opt.names.push_back(name);
        opt.velocity.emplace(name, Tensor::zeros(params.at(name).value.shape));
    }
    return opt;
}

void sgd_step(ParameterSet& params, OptimizerState& opt) {
    for (const std::string& name : params.names()) {
        Param& p = params.at(name);
        if (!p.has_grad) {
            throw std::runtime_error("sgd_step: missing gradient for '" + name + "'");
        }
        auto it = opt.velocity.find(name);
        if (it == opt.velocity.end() || !it->second.same_shape(p.value)) {
            throw std::runtime_error("sgd_step: optimizer state does not match '" + name + "'");
        }
        Tensor& vel = it->second;
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            vel.v[i] = opt.momentum * vel.v[i] + p.grad.v[i];
            p.value.v[i] -= opt.learning_rate * vel.v[i];
        }
    }
    params.zero_grads();
}

void ema_update(const ParameterSet& online, ParameterSet& target, double rate) {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("ema rate must lie in [0,1]");
    if (online.size() != target.size()) {
        throw std::invalid_argument("ema_update: parameter sets differ in size");
    }
    for (const std::string& name : target.names()) {
        if (!online.contains(name)) {
            throw std::invalid_argument("ema_update: online set lacks '" + name + "'");
        }
        const Tensor& src = online.at(name).value;
        Tensor& dst = target.at(name).value;
        if (!dst.same_shape(src)) {
            throw std::invalid_argument("ema_update: shape mismatch for '" + name + "'");
        }
        for (std::size_t i = 0; i < dst.numel(); ++i) {
            dst.v[i] = rate * dst.v[i] + (1.0 - rate) * src.v[i];
        }
    }
}

}  // namespace estas
