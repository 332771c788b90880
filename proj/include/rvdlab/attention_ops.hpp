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

#include "rvdlab/graph.hpp"

namespace rvd {

// Axial attention over each position's row and column. For pixel (y,x) the
// candidate set is its full row (W entries) plus its column without the
// center (H-1 entries): H+W-1 softmax-normalized logits
//   logit_j = sum_c q(c, y, x) * k(c, candidate_j)
// and the output recombines v over the same candidates. q/k may have fewer
// channels than v. Shapes: q,k (B,Cq,H,W); v (B,Cv,H,W) -> (B,Cv,H,W).
Var criss_cross_attend(Tape& tape, const Var& q, const Var& k, const Var& v);

// Row-softmax Gram recombination: for x viewed as (R,M),
//   A = softmax_rows(x x^T), y = A x.
// Used for channel attention (R=C, M=H*W) and temporal attention
// (R=T, M=C*H*W). Input must be rank-2.
Var gram_softmax_recombine(Tape& tape, const Var& x);

}  // namespace rvd
