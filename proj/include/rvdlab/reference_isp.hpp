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

#include <array>
#include <string>

#include "rvdlab/bayer.hpp"
#include "rvdlab/tensor.hpp"

namespace rvd {

// Deterministic fixed-function camera pipeline: bilinear demosaic -> white
// balance gains -> 3x3 color matrix -> clamp -> gamma encode. Its inverse
// maps sRGB renderings back to mosaic space for noise-realistic synthesis.
struct IspConfig {
  std::array<double, 3> wb_gains = {2.0, 1.0, 1.6};  // R, G, B
  std::array<double, 9> ccm = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major, applied to (R,G,B)
  double gamma = 1.0 / 2.2;  // encode exponent
};

void validate_isp_config(const IspConfig& config);
IspConfig load_isp_config(const std::string& path);
void save_isp_config(const std::string& path, const IspConfig& config);

// Bilinear CFA interpolation. The mosaic sample at each site is copied into
// its own channel untouched; missing channels average the nearest neighbors
// (borders replicate). Output (3,H,W) at mosaic resolution.
Tensor demosaic_bilinear(const Tensor& mosaic, BayerPattern pattern);

// Normalized mosaic in [0,1] -> display-referred sRGB (3,H,W) in [0,1].
Tensor isp_forward(const Tensor& mosaic, BayerPattern pattern, const IspConfig& config);

// sRGB (3,H,W) -> normalized mosaic (H,W). Exact inverse of isp_forward at
// CFA sample sites whenever the forward clamp was inactive.
Tensor isp_inverse(const Tensor& srgb, BayerPattern pattern, const IspConfig& config);

bool invert3x3(const std::array<double, 9>& m, std::array<double, 9>* out);

}  // namespace rvd
