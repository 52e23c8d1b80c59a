#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "superdec/common.hpp"

namespace superdec {

namespace detail {

// One recorded op (or leaf) in the reverse-mode graph. Interior nodes keep
// shared ownership of their parents, so a forward result keeps its whole
// history alive until it is dropped.
template <typename T>
struct Node {
    Shape4 shape;
    std::vector<T> value;
    std::vector<T> grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    bool consumed = false;  // a backward pass already ran through this node
    std::string name;       // set for parameters; used in diagnostics
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // accumulates into parents' grads

    bool is_leaf() const { return parents.empty(); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

} // namespace detail

// Dense [B,C,H,W] tensor participating in a reverse-mode graph. Copies are
// shallow (shared node); detach()/copy() give independent leaves.
template <typename T>
class Tensor {
public:
    using Scalar = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(const Shape4& s) { return full(s, T(0)); }

    static Tensor full(const Shape4& s, T v) {
        auto n = std::make_shared<detail::Node<T>>();
        n->shape = s;
        n->value.assign(static_cast<std::size_t>(s.numel()), v);
        return Tensor(std::move(n));
    }

    static Tensor from_data(const Shape4& s, std::vector<T> data) {
        if (static_cast<std::int64_t>(data.size()) != s.numel())
            throw ShapeError("from_data: data length " + std::to_string(data.size()) +
                             " does not match shape " + s.str());
        auto n = std::make_shared<detail::Node<T>>();
        n->shape = s;
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    static Tensor scalar(T v) { return full(Shape4{1, 1, 1, 1}, v); }

    static Tensor uniform(const Shape4& s, Rng& rng, T lo, T hi) {
        Tensor t = zeros(s);
        for (auto& x : t.node_->value) x = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    static Tensor normal(const Shape4& s, Rng& rng, T mean, T stddev) {
        Tensor t = zeros(s);
        for (auto& x : t.node_->value) x = static_cast<T>(rng.normal(mean, stddev));
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape4& shape() const { return node_->shape; }
    std::int64_t numel() const { return node_->shape.numel(); }

    // Spans alias the node's storage; binding one to a temporary tensor
    // would dangle, so rvalue access is a compile error.
    std::span<const T> values() const& { return node_->value; }
    std::span<const T> values() && = delete;

    // Leaf-only mutation: rewriting an op result would desynchronize the
    // recorded graph.
    std::span<T> values_mut() & {
        if (!node_->is_leaf())
            throw GraphError("values_mut: cannot mutate a non-leaf tensor" +
                             (node_->name.empty() ? std::string() : " '" + node_->name + "'"));
        return node_->value;
    }
    std::span<T> values_mut() && = delete;

    T item() const {
        if (numel() != 1)
            throw ShapeError("item: tensor " + shape().str() + " is not a scalar");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        if (b && !node_->is_leaf())
            throw GraphError("set_requires_grad: only leaf tensors can become roots");
        node_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return defined() && !node_->grad.empty(); }
    std::span<const T> grad() const& {
        if (!has_grad())
            throw GraphError("grad: no gradient recorded" +
                             (node_->name.empty() ? std::string() : " for '" + node_->name + "'"));
        return node_->grad;
    }
    std::span<const T> grad() && = delete;
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string n) {
        node_->name = std::move(n);
        return *this;
    }

    // Deep copy with no graph history.
    Tensor detach() const {
        auto n = std::make_shared<detail::Node<T>>();
        n->shape = node_->shape;
        n->value = node_->value;
        return Tensor(std::move(n));
    }

    NodePtr node() const { return node_; }

private:
    NodePtr node_;
};

// Learnable tensor with a unique path-style name ("dec.stage2.fd.conv1.weight").
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
};

// Topologically ordered record of the ops reachable from one root, with the
// saved state needed for exactly one backward pass.
template <typename T>
class Graph {
public:
    static Graph build(const Tensor<T>& root);

    // Seeds the (scalar) root with d(root)/d(root) = 1 and visits nodes in
    // exact reverse topological order. A second pass over the same nodes is
    // an error: the saved state is released as each node is consumed.
    void backward();

    std::size_t size() const { return order_.size(); }

private:
    std::vector<typename Tensor<T>::NodePtr> order_;  // parents before consumers
    typename Tensor<T>::NodePtr root_;
};

// Runs a single reverse pass from a scalar loss, populating grads on every
// reachable tensor with requires_grad set.
template <typename T>
void backward(const Tensor<T>& loss);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace superdec
