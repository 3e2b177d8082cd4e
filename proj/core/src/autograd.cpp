#include "sthdr/autograd.hpp"

#include "sthdr/errors.hpp"

#include <unordered_set>

namespace sthdr {

Tensor& Node::grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
    return grad;
}

void Node::accumulate(const Tensor& g) {
    require_same_shape(value, g, "gradient accumulation");
    Tensor& buf = grad_buffer();
    Real* dst = buf.ptr();
    const Real* src = g.ptr();
    for (std::size_t i = 0; i < buf.size(); ++i) dst[i] += src[i];
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

Tensor Var::grad() const {
    if (!node_->grad.empty()) return node_->grad;
    return Tensor(node_->value.shape());
}

Var Var::make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool any = false;
    for (const Var& p : parents) any = any || p.requires_grad();
    if (any) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (Var& p : parents) n->parents.push_back(p.node_);
        n->backward_fn = std::move(fn);
    }
    return Var(std::move(n));
}

void backward(const Var& root) {
    if (!root.defined()) throw Error("backward on undefined variable");
    if (root.value().size() != 1) throw ShapeError("backward root must be scalar, got " + to_string(root.shape()));
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += Real(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

} // namespace sthdr
