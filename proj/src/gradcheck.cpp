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

#include "rvdlab/gradcheck.hpp"

#include <cmath>

#include "rvdlab/ops.hpp"

namespace rvd {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Var random_projection(Tape& tape, const Var& x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor weights = random_tensor(x->value.shape(), rng, -1.0, 1.0);
  Var w = tape.leaf(std::move(weights), false);
  return sum_all(tape, mul(tape, x, w));
}

GradCheckReport finite_diff_check(const GraphBuilder& build, std::vector<Tensor> inputs,
                                  double step, double denom_floor) {
  // Analytic pass.
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t.clone(), true));
    Var root = build(tape, leaves);
    require(root->value.size() == 1, ErrorKind::dimension, "gradcheck builder must return scalar");
    tape.backward(root);
    for (const auto& leaf : leaves) {
      analytic.push_back(leaf->grad.defined() ? leaf->grad.clone()
                                              : Tensor(leaf->value.shape()));
    }
  }

  auto evaluate = [&](const std::vector<Tensor>& probe) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(probe.size());
    for (const auto& t : probe) leaves.push_back(tape.leaf(t, false));
    return build(tape, leaves)->value[0];
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double saved = inputs[i][e];
      inputs[i][e] = saved + step;
      const double up = evaluate(inputs);
      inputs[i][e] = saved - step;
      const double down = evaluate(inputs);
      inputs[i][e] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][e];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max(denom_floor, std::abs(a));
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, rel_err);
      ++report.elements;
    }
  }
  return report;
}

}  // namespace rvd
