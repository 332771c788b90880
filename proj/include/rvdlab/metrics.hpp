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

#include "rvdlab/tensor.hpp"

namespace rvd {

struct Metrics {
  double psnr = 0.0;
  double ssim = 0.0;
};

// Peak signal-to-noise ratio over all elements, inputs clamped to [0,1]
// before scoring; 10*log10(1/MSE), capped at 99 dB (the MSE=0 value).
double psnr_score(const Tensor& pred, const Tensor& gt);

// Structural similarity with the standard 11x11 Gaussian window (sigma 1.5,
// K1=0.01, K2=0.03, dynamic range 1). Windows are evaluated only where they
// fit entirely inside the image (no padding); moments are window-weighted and
// uncorrected. Accepts (H,W) single-plane or (C,H,W) inputs; multi-channel
// scores average the per-channel results.
double ssim_score(const Tensor& pred, const Tensor& gt);

Metrics score_pair(const Tensor& pred, const Tensor& gt);

}  // namespace rvd
