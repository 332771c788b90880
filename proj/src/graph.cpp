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

#include "rvdlab/graph.hpp"

#include <cstring>
#include <unordered_set>

#include "rvdlab/common.hpp"

namespace rvd {

Var Tape::leaf(Tensor value, bool requires_grad, const char* tag) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->tag = tag;
  nodes_.push_back(node);
  return node;
}

Var Tape::leaf_shared_grad(Tensor value, Tensor grad, bool requires_grad) {
  require(value.same_shape(grad), ErrorKind::dimension,
          "parameter grad buffer shape mismatch");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->grad = std::move(grad);
  node->requires_grad = requires_grad;
  nodes_.push_back(node);
  return node;
}

Var Tape::record(Tensor value, std::vector<Var> parents,
                 std::function<void()> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) node->requires_grad |= p->requires_grad;
  node->parents = std::move(parents);
  if (node->requires_grad) node->backward = std::move(backward_fn);
  nodes_.push_back(node);
  return node;
}

void Tape::backward(const Var& root) {
  require(!backward_called_, ErrorKind::state,
          "tape backward already ran; combine losses into one scalar or use a new tape");
  require(root->value.size() == 1, ErrorKind::dimension, "backward root must be scalar");
  require(root->requires_grad, ErrorKind::state, "backward root does not require grad");
  backward_called_ = true;
  grad_buffer(root)[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* node = it->get();
    if (!node->requires_grad || !node->grad.defined() || !node->backward) continue;
    node->backward();
  }
}

void Tape::clear() {
  // Backward closures capture their own node (and its parents) by shared
  // pointer, so every recorded node sits in a reference cycle. Break the
  // cycles explicitly; this also keeps deep parent chains from unwinding
  // recursively through chained shared_ptr destructors. Values stay valid
  // for any externally held Var — only the graph structure is released.
  for (Var& node : nodes_) {
    node->backward = nullptr;
    node->parents.clear();
  }
  nodes_.clear();
  backward_called_ = false;
}

bool reaches_tag(const Var& v, const char* tag) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack = {v.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->tag && std::strcmp(n->tag, tag) == 0) return true;
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  return false;
}

}  // namespace rvd
