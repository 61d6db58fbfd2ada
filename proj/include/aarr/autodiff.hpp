#pragma once

// Reverse-mode differentiation over 2-D tensors. A graph is built by calling
// the free functions below on Var handles and discarded after backward().

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "aarr/tensor.hpp"

namespace aarr::ad {

struct Node;

/// Shared handle to a graph node. Copies alias the same node.
class Var {
public:
    Var() = default;

    /// Leaf that backward() can differentiate with respect to.
    static Var leaf(Tensor value);
    /// Leaf with no parents; gradients never flow through it.
    static Var constant(Tensor value);

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool valid() const noexcept { return node_ != nullptr; }
    const Node* id() const noexcept { return node_.get(); }

private:
    friend Var make_node(Tensor value, std::vector<Var> parents,
                         std::function<void(const Tensor&, std::span<Tensor>)> backward_fn);
    friend struct Node;
    friend std::vector<Tensor> backward(const Var& loss, std::span<const Var> targets);

    std::shared_ptr<Node> node_;
};

/// Graph node: a value, its parents, and the vector-Jacobian product that
/// accumulates the output gradient into one gradient slot per parent.
struct Node {
    Tensor value;
    std::vector<Var> parents;
    std::function<void(const Tensor& grad_out, std::span<Tensor> parent_grads)> backward_fn;
};

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(const Tensor&, std::span<Tensor>)> backward_fn);

/// Gradients of a one-element loss with respect to each target, in order.
/// Targets the loss does not depend on get a zero tensor of their shape.
/// The graph is left untouched, so repeated calls give identical results.
std::vector<Tensor> backward(const Var& loss, std::span<const Var> targets);
std::vector<Tensor> backward(const Var& loss, std::initializer_list<Var> targets);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var transpose(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);

/// Sum of every entry, as a 1x1 tensor.
Var sum(const Var& a);
/// Reductions keep the reduced axis with extent 1.
Var sum_axis(const Var& a, std::size_t axis);
Var mean_axis(const Var& a, std::size_t axis);

struct MaxResult {
    Var values;
    std::vector<std::size_t> argmax;  // one index per retained slice
};
/// Max along an axis; ties resolve to the lowest index and the subgradient
/// goes to that entry only.
MaxResult max_axis(const Var& a, std::size_t axis);

/// Repeat a column vector (m x 1) along axis 1, or a row vector (1 x n)
/// along axis 0, to the given extent.
Var broadcast(const Var& v, std::size_t axis, std::size_t extent);

Var softmax_axis(const Var& a, std::size_t axis);
/// Mean of (a - b)^2 over all entries.
Var mse(const Var& a, const Var& b);
/// -log softmax(logits)[target] for a K x 1 logit column.
Var cross_entropy(const Var& logits, std::size_t target);

/// Plain-tensor softmax, shared by the differentiable op and evaluation code.
Tensor softmax_tensor(const Tensor& x, std::size_t axis);

}  // namespace aarr::ad
