// Copyright (c) 2026 rvdlab authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rvdlab/tensor.hpp"

namespace rvd {

// Reverse-mode autodiff over Tensors. A Tape owns nodes in creation order;
// backward() walks that order in reverse once. Ops allocate fresh output
// tensors and register a closure that pulls the node's grad and accumulates
// into its parents' grads (always +=, never =).
struct Node {
  Tensor value;
  Tensor grad;  // lazily allocated; may alias a persistent parameter grad
  bool requires_grad = false;
  const char* tag = nullptr;  // dataflow label for structural assertions
  std::function<void()> backward;
  std::vector<std::shared_ptr<Node>> parents;
};

using Var = std::shared_ptr<Node>;

// Grad tensor of v, allocated as zeros on first use.
inline Tensor& grad_buffer(const Var& v) {
  if (!v->grad.defined()) v->grad = Tensor(v->value.shape());
  return v->grad;
}

class Tape {
 public:
  Tape() = default;
  ~Tape() { clear(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false, const char* tag = nullptr);

  // Leaf whose grad buffer is supplied by the caller (persistent parameter
  // grads shared across tapes and accumulated until the optimizer steps).
  Var leaf_shared_grad(Tensor value, Tensor grad, bool requires_grad);

  Var record(Tensor value, std::vector<Var> parents, std::function<void()> backward_fn);

  // Seeds d(root)/d(root)=1 and runs every recorded closure in reverse
  // creation order. One call per tape; combine losses into one scalar first
  // (or use separate tapes — parameter grads accumulate across tapes).
  void backward(const Var& root);

  std::size_t node_count() const { return nodes_.size(); }
  void clear();

 private:
  std::vector<Var> nodes_;
  bool backward_called_ = false;
};

// True if walking parents from v can reach a node labeled `tag`.
bool reaches_tag(const Var& v, const char* tag);

}  // namespace rvd
