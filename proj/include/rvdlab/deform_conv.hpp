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

// Modulated deformable convolution, stride 1, same-size output (odd kernel,
// pad = k/2). Each kernel tap samples the input at its regular grid location
// displaced by a learned per-position offset, bilinearly interpolated and
// scaled by a per-tap modulation weight in [0,1] (sigmoid applied by the
// caller). Samples fully outside the input read as zero, matching the zero
// padding of a standard convolution, so zero offsets with modulation 1
// reproduce conv2d with identical weights exactly.
//
//   x          (B, Cin, H, W)
//   offsets    (B, 2K, H, W)   channel 2k = dy of tap k, 2k+1 = dx; k = i*kw+j
//   modulation (B, K, H, W)
//   w          (Cout, Cin, kh, kw), kh/kw odd
//   bias       (Cout) or null
Var deform_conv2d(Tape& tape, const Var& x, const Var& offsets, const Var& modulation,
                  const Var& w, const Var& bias);

}  // namespace rvd
