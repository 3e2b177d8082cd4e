#pragma once

#include "sthdr/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace sthdr {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. backward_fn reads `grad` and
// accumulates into the parents that require gradients.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer();
    void accumulate(const Tensor& g);
};

class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var leaf(Tensor value, bool requires_grad = true);

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }
    explicit operator bool() const { return defined(); }

    // Gradient after backward(); zeros if nothing flowed here.
    Tensor grad() const;

    const NodePtr& node() const { return node_; }

    // Builds an op result; when no parent requires a gradient the result is a
    // constant and fn is dropped.
    static Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn);

private:
    explicit Var(NodePtr node) : node_(std::move(node)) {}
    NodePtr node_;
};

// Reverse sweep from a scalar root (seed gradient 1).
void backward(const Var& root);

} // namespace sthdr
