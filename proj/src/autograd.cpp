#include "vseg/autograd.hpp"

#include <unordered_set>

namespace vseg {

Var leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->is_leaf = true;
    n->requires_grad = false;
    return n;
}

Var param(Tensor value, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->is_leaf = true;
    n->requires_grad = true;
    n->name = std::move(name);
    return n;
}

Var detach(const Var& x) { return leaf(x->value); }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_op) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->is_leaf = false;
    for (const auto& p : parents) {
        if (p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward_op = std::move(backward_op);
    return n;
}

void backward(const Var& root) {
    check(root->value.numel() == 1, "backward: root must be scalar");
    if (!root->requires_grad) return;

    // iterative post-order DFS over the requires_grad subgraph
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.fill(1.0);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_op && n->has_grad()) n->backward_op(*n);
    }
}

}  // namespace vseg
