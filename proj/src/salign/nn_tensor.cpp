// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#include "salign/nn/tensor.hpp"

#include <omp.h>

#include <cstdlib>
#include <numeric>
#include <unordered_set>

#include "salign/core/errors.hpp"

namespace salign::nn {

Tensor::Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)) {
    std::int64_t n = 1;
    for (int d : shape_) {
        if (d < 0) throw ArgumentError("Tensor: negative dimension");
        n *= d;
    }
    data_.assign(static_cast<std::size_t>(n), fill);
}

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = false;
    return node;
}

Var leaf(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return node;
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->parents = std::move(parents);
    for (const Var& p : node->parents) {
        if (p && p->requires_grad) {
            node->requires_grad = true;
            break;
        }
    }
    if (node->requires_grad) node->backprop = std::move(backprop);
    return node;
}

void backward(const Var& root) {
    if (!root) throw ArgumentError("backward: null root");
    if (root->value.size() != 1) throw ArgumentError("backward: root must be scalar");
    if (!root->requires_grad) return;

    // Iterative DFS topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Node* child = node->parents[next_child].get();
            ++next_child;
            if (child && child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop && node->grad.defined()) node->backprop(*node);
    }
}

void zero_grad(const std::vector<Var>& params) {
    for (const Var& p : params) {
        if (p) p->grad = Tensor();
    }
}

int thread_count() {
    static int cached = [] {
        if (const char* env = std::getenv("SALIGN_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        return omp_get_max_threads();
    }();
    return cached;
}

}  // namespace salign::nn
