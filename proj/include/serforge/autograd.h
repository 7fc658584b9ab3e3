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

#ifndef SERFORGE_AUTOGRAD_H_
#define SERFORGE_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <vector>

#include "serforge/tensor.h"

namespace serforge {

// A node of the dynamic reverse-mode graph. Each op creates one node holding
// its forward value and a closure that pushes the node's gradient into its
// inputs. Graphs are built per forward pass and freed with the last Var.
template <typename T>
struct GraphNode {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<GraphNode>> inputs;
  std::function<void(GraphNode&)> backward;

  // Zero-initialized on first use.
  Tensor<T>& Grad();
};

template <typename T>
class Var {
 public:
  using Node = GraphNode<T>;

  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var Constant(Tensor<T> value);
  static Var Parameter(Tensor<T> value);

  bool defined() const noexcept { return node_ != nullptr; }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  // Empty tensor when no gradient has reached this node.
  const Tensor<T>& grad() const { return node_->grad; }

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds the result node of an op. The backward closure and input links are
// only retained when some input requires a gradient.
template <typename T>
Var<T> MakeResult(Tensor<T> value, std::vector<Var<T>> inputs,
                  std::function<void(GraphNode<T>&)> backward);

// Seeds the root with ones (or `seed`) and propagates in reverse topological order.
template <typename T>
void Backward(const Var<T>& root);
template <typename T>
void Backward(const Var<T>& root, const Tensor<T>& seed);

extern template class Var<float>;
extern template class Var<double>;

}  // namespace serforge

#endif  // SERFORGE_AUTOGRAD_H_
