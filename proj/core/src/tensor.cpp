#include "superdec/tensor.hpp"

#include <unordered_set>

namespace superdec {

template <typename T>
Graph<T> Graph<T>::build(const Tensor<T>& root) {
    Graph g;
    g.root_ = root.node();

    // Iterative DFS post-order over parents: every node lands after all of
    // its parents, so the reversed list visits consumers before producers.
    std::unordered_set<const detail::Node<T>*> seen;
    std::vector<std::pair<typename Tensor<T>::NodePtr, std::size_t>> stack;
    stack.emplace_back(g.root_, 0);
    seen.insert(g.root_.get());
    while (!stack.empty()) {
        auto& [node, next_parent] = stack.back();
        if (next_parent < node->parents.size()) {
            auto parent = node->parents[next_parent++];
            if (seen.insert(parent.get()).second) stack.emplace_back(std::move(parent), 0);
        } else {
            g.order_.push_back(node);
            stack.pop_back();
        }
    }
    return g;
}

template <typename T>
void Graph<T>::backward() {
    if (root_->shape.numel() != 1)
        throw GraphError("backward: loss must be scalar, got " + root_->shape.str());
    if (root_->consumed)
        throw GraphError("backward: graph already consumed; run a new forward pass first");

    root_->ensure_grad();
    root_->grad[0] += T(1);

    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::Node<T>& n = **it;
        if (n.consumed)
            throw GraphError("backward: op result already consumed by a previous pass; "
                             "run a new forward pass first");
        if (n.backward_fn) {
            n.ensure_grad();
            n.backward_fn(n);
            n.backward_fn = nullptr;  // saved state is single-use
            n.parents.clear();
            n.consumed = true;
        }
        // leaves (parameters, inputs) stay reusable across passes
    }
    root_->consumed = true;
}

template <typename T>
void backward(const Tensor<T>& loss) {
    Graph<T>::build(loss).backward();
}

template class Graph<float>;
template class Graph<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

} // namespace superdec
