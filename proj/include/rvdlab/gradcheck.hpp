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

#include "rvdlab/graph.hpp"
#include "rvdlab/rng.hpp"

namespace rvd {

// Compares reverse-mode gradients against 64-bit central finite differences
// element by element. `build` must deterministically construct a scalar from
// the given leaves; it runs once for the analytic pass and twice per element
// for the numeric pass.
struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t elements = 0;

  bool pass(double tol) const { return max_rel_err < tol; }
};

using GraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

// rel err per element = |analytic - numeric| / max(denom_floor, |analytic|).
GradCheckReport finite_diff_check(const GraphBuilder& build, std::vector<Tensor> inputs,
                                  double step = 1e-5, double denom_floor = 1e-3);

// Fixed pseudo-random projection to a scalar so gradient errors anywhere in
// the output cannot cancel; pair with any op under test.
Var random_projection(Tape& tape, const Var& x, std::uint64_t seed);

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0);

}  // namespace rvd
