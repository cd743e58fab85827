#include "mvtri/graph.hpp"

#include <stdexcept>
#include <unordered_set>

namespace mvtri::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var make_param(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

void backward(const Var& root, GradStore& store) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (root->value.size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " +
                                root->value.shape_str());

  // iterative post-order DFS; graphs can be deep enough to overflow the
  // stack with a recursive walk
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node* child = node->parents[next_child++].get();
      if (child->requires_grad && visited.insert(child).second)
        stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  store.grad(root.get()) = Tensor::full(root->value.shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backprop) continue;
    const Tensor* g = store.find(node);
    if (g == nullptr) continue;
    node->backprop(*g, store);
  }
}

}  // namespace mvtri::ad
