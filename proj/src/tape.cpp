#include "estas/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "estas/kernels.hpp"

namespace estas {

Tape::NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::constant(Tensor value) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::NodeId Tape::param(const ParameterSet& set, const std::string& name) {
    for (const ParamRef& r : param_refs_) {
        if (r.set == &set && r.name == name) return r.node;
    }
    Node n;
    n.op = Op::Param;
    n.value = set.at(name).value;
    NodeId id = push(std::move(n));
    param_refs_.push_back({&set, name, id});
    return id;
}

Tape::NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
    Node n;
    n.op = Op::Affine;
    n.in = {x, w, b};
    n.value = kernels::affine_forward(nodes_[x].value, nodes_[w].value, nodes_[b].value);
    return push(std::move(n));
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b, std::uint32_t stride,
                          std::uint32_t pad) {
    Node n;
    n.op = Op::Conv2d;
    n.in = {x, w, b};
    n.stride = stride;
    n.pad = pad;
    n.value = kernels::conv2d_forward(nodes_[x].value, nodes_[w].value, nodes_[b].value,
                                      stride, pad);
    return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId x) {
    Node n;
    n.op = Op::Relu;
    n.in = {x};
    n.value = kernels::relu_forward(nodes_[x].value);
    return push(std::move(n));
}

Tape::NodeId Tape::global_avg_pool(NodeId x) {
    Node n;
    n.op = Op::Gap;
    n.in = {x};
    n.value = kernels::global_avg_pool_forward(nodes_[x].value);
    return push(std::move(n));
}

Tape::NodeId Tape::l2_normalize(NodeId x) {
    Node n;
    n.op = Op::L2Norm;
    n.in = {x};
    n.value = kernels::l2_normalize_forward(nodes_[x].value);
    return push(std::move(n));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    if (!nodes_[a].value.same_shape(nodes_[b].value)) {
        throw std::invalid_argument("tape sub: shape mismatch");
    }
    Node n;
    n.op = Op::Sub;
    n.in = {a, b};
    n.value = nodes_[a].value;
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value.v[i] -= nodes_[b].value.v[i];
    return push(std::move(n));
}

Tape::NodeId Tape::dot(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Dot;
    n.in = {a, b};
    n.value = Tensor::scalar(estas::dot(nodes_[a].value, nodes_[b].value));
    return push(std::move(n));
}

Tape::NodeId Tape::axpb(NodeId x, double a, double b) {
    if (nodes_[x].value.numel() != 1) throw std::invalid_argument("tape axpb: scalar only");
    Node n;
    n.op = Op::Axpb;
    n.in = {x};
    n.a = a;
    n.b = b;
    n.value = Tensor::scalar(a * nodes_[x].value.v[0] + b);
    return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    if (nodes_[a].value.numel() != 1 || nodes_[b].value.numel() != 1) {
        throw std::invalid_argument("tape add: scalar only");
    }
    Node n;
    n.op = Op::Add;
    n.in = {a, b};
    n.value = Tensor::scalar(nodes_[a].value.v[0] + nodes_[b].value.v[0]);
    return push(std::move(n));
}

Tape::NodeId Tape::neg_log_softmax_first(const std::vector<NodeId>& logits) {
    if (logits.empty()) throw std::invalid_argument("tape nlsf: no logits");
    Node n;
    n.op = Op::Nlsf;
    n.in = logits;
    double m = nodes_[logits[0]].value.v[0];
    for (NodeId id : logits) m = std::max(m, nodes_[id].value.v[0]);
    double denom = 0.0;
    for (NodeId id : logits) denom += std::exp(nodes_[id].value.v[0] - m);
    n.value = Tensor::scalar(-(nodes_[logits[0]].value.v[0] - m) + std::log(denom));
    return push(std::move(n));
}

void Tape::backward(NodeId root) {
    if (nodes_[root].value.numel() != 1) {
        throw std::invalid_argument("backward root must be scalar");
    }
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads_.push_back(Tensor::zeros(n.value.shape));
    grads_[root].v[0] = 1.0;

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        const Node& n = nodes_[idx];
        const Tensor& gy = grads_[idx];
        switch (n.op) {
            case Op::Constant:
            case Op::Param:
                break;
            case Op::Affine:
                kernels::affine_backward(nodes_[n.in[0]].value, nodes_[n.in[1]].value, gy,
                                         grads_[n.in[0]], grads_[n.in[1]], grads_[n.in[2]]);
                break;
            case Op::Conv2d:
                kernels::conv2d_backward(nodes_[n.in[0]].value, nodes_[n.in[1]].value, gy,
                                         n.stride, n.pad, grads_[n.in[0]],
                                         grads_[n.in[1]], grads_[n.in[2]]);
                break;
            case Op::Relu:
                kernels::relu_backward(nodes_[n.in[0]].value, gy, grads_[n.in[0]]);
                break;
            case Op::Gap:
                kernels::global_avg_pool_backward(nodes_[n.in[0]].value, gy, grads_[n.in[0]]);
                break;
            case Op::L2Norm:
                kernels::l2_normalize_backward(nodes_[n.in[0]].value, n.value, gy,
                                               grads_[n.in[0]]);
                break;
            case Op::Sub: {
                Tensor& ga = grads_[n.in[0]];
                Tensor& gb = grads_[n.in[1]];
                for (std::size_t i = 0; i < gy.numel(); ++i) {
                    ga.v[i] += gy.v[i];
                    gb.v[i] -= gy.v[i];
                }
                break;
            }
            case Op::Dot: {
                const double g = gy.v[0];
                const Tensor& a = nodes_[n.in[0]].value;
                const Tensor& b = nodes_[n.in[1]].value;
                Tensor& ga = grads_[n.in[0]];
                Tensor& gb = grads_[n.in[1]];
                for (std::size_t i = 0; i < a.numel(); ++i) {
                    ga.v[i] += g * b.v[i];
                    gb.v[i] += g * a.v[i];
                }
                break;
            }
            case Op::Axpb:
                grads_[n.in[0]].v[0] += n.a * gy.v[0];
                break;
            case Op::Add:
                grads_[n.in[0]].v[0] += gy.v[0];
                grads_[n.in[1]].v[0] += gy.v[0];
                break;
            case Op::Nlsf: {
                const double g = gy.v[0];
                double m = nodes_[n.in[0]].value.v[0];
                for (NodeId id : n.in) m = std::max(m, nodes_[id].value.v[0]);
                double denom = 0.0;
                for (NodeId id : n.in) denom += std::exp(nodes_[id].value.v[0] - m);
                for (std::size_t j = 0; j < n.in.size(); ++j) {
                    const double p = std::exp(nodes_[n.in[j]].value.v[0] - m) / denom;
                    grads_[n.in[j]].v[0] += g * (p - (j == 0 ? 1.0 : 0.0));
                }
                break;
            }
        }
    }
}

void Tape::add_param_grads(ParameterSet& set, double scale) {
    if (grads_.empty()) throw std::runtime_error("add_param_grads before backward");
    for (const ParamRef& r : param_refs_) {
        if (r.set == &set) {
            set.accumulate_grad(r.name, grads_[r.node], scale);
        }
    }
}

double Tape::min_relu_input_abs() const {
    double m = std::numeric_limits<double>::infinity();
    for (const Node& n : nodes_) {
        if (n.op != Op::Relu) continue;
        for (double x : nodes_[n.in[0]].value.v) {
            m = std::min(m, std::abs(x));
        }
    }
    return m;
}

double grad_check(const std::function<double(const ParameterSet&)>& forward,
                  ParameterSet& params, double epsilon) {
    if (!(epsilon > 0.0) || epsilon > 1e-3) {
        throw std::invalid_argument("grad_check: epsilon must lie in (0, 1e-3]");
    }
    double max_rel = 0.0;
    for (const std::string& name : params.names()) {
        Param& p = params.at(name);
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const double saved = p.value.v[i];
            p.value.v[i] = saved + epsilon;
            const double f_plus = forward(params);
            p.value.v[i] = saved - epsilon;
            const double f_minus = forward(params);
            p.value.v[i] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
                throw std::runtime_error("grad_check: non-finite intermediate");
            }
            const double fd = (f_plus - f_minus) / (2.0 * epsilon);
            const double an = p.grad.v[i];
            const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
            max_rel = std::max(max_rel, std::abs(fd - an) / denom);
        }
    }
    return max_rel;
}

}  // namespace estas
