// Copyright 2026 The ser-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "serforge/autograd.h"

#include <unordered_set>

#include "serforge/error.h"

namespace serforge {

template <typename T>
Tensor<T>& GraphNode<T>::Grad() {
  if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
  return grad;
}

template <typename T>
Var<T> Var<T>::Constant(Tensor<T> value) {
  auto node = std::make_shared<GraphNode<T>>();
  node->value = std::move(value);
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::Parameter(Tensor<T> value) {
  auto node = std::make_shared<GraphNode<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

template <typename T>
Var<T> MakeResult(Tensor<T> value, std::vector<Var<T>> inputs,
                  std::function<void(GraphNode<T>&)> backward) {
  auto node = std::make_shared<GraphNode<T>>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void Backward(const Var<T>& root, const Tensor<T>& seed) {
  if (!root.requires_grad()) return;
  if (seed.size() != root.value().size()) {
    Fail(ErrorKind::kShape, "backward seed " + ShapeString(seed.shape()) +
                                " does not match root " + ShapeString(root.shape()));
  }
  using Node = GraphNode<T>;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  auto& g = root.node()->Grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
  }
}

template <typename T>
void Backward(const Var<T>& root) {
  Backward(root, Tensor<T>(root.shape(), T(1)));
}

template class Var<float>;
template class Var<double>;
template struct GraphNode<float>;
template struct GraphNode<double>;
template Var<float> MakeResult(Tensor<float>, std::vector<Var<float>>,
                               std::function<void(GraphNode<float>&)>);
template Var<double> MakeResult(Tensor<double>, std::vector<Var<double>>,
                                std::function<void(GraphNode<double>&)>);
template void Backward(const Var<float>&);
template void Backward(const Var<double>&);
template void Backward(const Var<float>&, const Tensor<float>&);
template void Backward(const Var<double>&, const Tensor<double>&);

}  // namespace serforge
