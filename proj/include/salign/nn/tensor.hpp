// Copyright (c) 2026 the salign authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace salign::nn {

// Dense float tensor, contiguous row-major over an arbitrary shape.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, float fill = 0.0f);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool defined() const { return !shape_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape_); }

  private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

struct Node;
using Var = std::shared_ptr<Node>;

// Reverse-mode autodiff node. Graphs are built per step and freed with the
// last Var handle; backward() walks them in reverse topological order.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // reads this node's grad, accumulates into parents

    void ensure_grad() {
        if (!grad.defined()) grad = Tensor::zeros_like(value);
    }
};

Var constant(Tensor value);
Var leaf(Tensor value);  // requires_grad = true
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// Backpropagate from a scalar root (size-1 tensor).
void backward(const Var& root);

void zero_grad(const std::vector<Var>& params);

// Worker count for the engine's parallel loops. Reads SALIGN_THREADS once;
// results are identical for any thread count (outputs are partitioned, never
// reduced across threads).
int thread_count();

}  // namespace salign::nn
