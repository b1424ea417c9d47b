#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "estas/params.hpp"
#include "estas/tensor.hpp"

namespace estas {

// Reverse-mode accumulation over a fixed operator set: affine, convolution,
// pooling, rectifier, normalize, difference, dot, scalar combine and
// softmax-log. Nodes are appended in evaluation order, so construction order
// is already a topological order and backward() is a single reverse sweep.
//
// Anything that should be treated as a gradient constant (target-network
// outputs, queue entries, raw inputs) enters through constant(); only
// param() leaves receive gradients.
class Tape {
public:
    using NodeId = std::uint32_t;

    NodeId constant(Tensor value);
    // Binds a parameter leaf. Repeated calls with the same set and name
    // return the same node, so shared weights accumulate naturally.
    NodeId param(const ParameterSet& set, const std::string& name);

    NodeId affine(NodeId x, NodeId w, NodeId b);
    NodeId conv2d(NodeId x, NodeId w, NodeId b, std::uint32_t stride, std::uint32_t pad);
    NodeId relu(NodeId x);
    NodeId global_avg_pool(NodeId x);
    NodeId l2_normalize(NodeId x);
    NodeId sub(NodeId a, NodeId b);
    NodeId dot(NodeId a, NodeId b);
    // Scalar a*x + b.
    NodeId axpb(NodeId x, double a, double b);
    NodeId add(NodeId a, NodeId b);
    // -logits[0] + logsumexp(logits), over scalar nodes; max-subtracted.
    NodeId neg_log_softmax_first(const std::vector<NodeId>& logits);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    double scalar_value(NodeId id) const { return nodes_[id].value.v[0]; }

    // Seeds d(root)=1 and sweeps once in reverse. root must be scalar.
    void backward(NodeId root);
    const Tensor& grad(NodeId id) const { return grads_[id]; }

    // After backward: adds every gradient bound to `set` into its grad
    // slots, scaled. Binding order is node-creation order.
    void add_param_grads(ParameterSet& set, double scale);

    // Smallest |pre-activation| over all rectifier nodes; the gradient
    // checks resample inputs that land within 1e-6 of a kink.
    double min_relu_input_abs() const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    enum class Op : std::uint8_t {
        Constant, Param, Affine, Conv2d, Relu, Gap, L2Norm, Sub, Dot, Axpb, Add, Nlsf
    };

    struct Node {
        Op op;
        std::vector<NodeId> in;
        Tensor value;
        double a = 0.0, b = 0.0;      // axpb coefficients
        std::uint32_t stride = 0, pad = 0;
    };

    NodeId push(Node n);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    struct ParamRef {
        const ParameterSet* set;
        std::string name;
        NodeId node;
    };
    std::vector<ParamRef> param_refs_;
};

// Central finite differences per parameter coordinate against the analytic
// gradients already stored in `params`. Returns the max of
// |fd - analytic| / max(1, |fd|, |analytic|) over all coordinates.
double grad_check(const std::function<double(const ParameterSet&)>& forward,
                  ParameterSet& params, double epsilon);

}  // namespace estas
