#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "mvtri/tensor.hpp"

namespace mvtri::ad {

class Node;
using Var = std::shared_ptr<Node>;
class GradStore;

// One node of the dynamic tape. Ops with no differentiable inputs produce
// nodes without parents or a backprop closure, so inference graphs free
// their intermediates as soon as the local Var goes out of scope.
class Node {
 public:
  Tensor value;
  bool requires_grad = false;
  std::vector<Var> parents;
  // accumulates dL/dparent into the store given dL/dthis
  std::function<void(const Tensor& grad_out, GradStore&)> backprop;
};

// Gradients are stored outside the graph. Parameter nodes are shared
// between concurrently built graphs (one per batch record); each builder
// backpropagates into its own store and the stores are reduced in record
// order, which keeps training bit-deterministic under threading.
class GradStore {
 public:
  Tensor& grad(const Node* n) {
    auto it = grads_.find(n);
    if (it == grads_.end())
      it = grads_.emplace(n, Tensor::zeros(n->value.shape())).first;
    return it->second;
  }
  const Tensor* find(const Node* n) const {
    auto it = grads_.find(n);
    return it == grads_.end() ? nullptr : &it->second;
  }
  void clear() { grads_.clear(); }

 private:
  std::unordered_map<const Node*, Tensor> grads_;
};

Var constant(Tensor value);
Var make_param(Tensor value);

// Thread-local gradient mode. While disabled, newly built nodes record no
// parents or backward closures, so inference graphs release intermediates
// as soon as local Vars go out of scope.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root) = 1 and
// walks the tape in reverse topological order.
void backward(const Var& root, GradStore& store);

}  // namespace mvtri::ad
