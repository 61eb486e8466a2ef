#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

// Reverse-mode autodiff over a dynamically built graph. Each op node owns its
// output value and a closure that scatters the incoming gradient to its
// parents. Graphs are rebuilt every step and freed when the root goes out of
// scope (children hold parents, never the other way around).
class Node {
  public:
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_op;
    std::string name;  // set for parameters

    Tensor& ensure_grad() {
        if (grad.numel() == 0) grad = Tensor::zeros(value.shape());
        return grad;
    }
    bool has_grad() const { return grad.numel() != 0; }
    void clear_grad() { grad = Tensor(); }
};

using Var = std::shared_ptr<Node>;

// Constant input: gradient never accumulates here.
Var leaf(Tensor value);

// Trainable parameter.
Var param(Tensor value, std::string name);

// Cut the graph: same value, no history.
Var detach(const Var& x);

// Internal op-node constructor; requires_grad is inherited from parents.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_op);

// Backpropagate from a scalar root (numel() == 1).
void backward(const Var& root);

}  // namespace vseg
