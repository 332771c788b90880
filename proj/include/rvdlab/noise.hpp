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

#include <string>
#include <vector>

#include "rvdlab/reference_isp.hpp"
#include "rvdlab/rng.hpp"
#include "rvdlab/sequence.hpp"
#include "rvdlab/tensor.hpp"

namespace rvd {

// Physically-based sensor noise in normalized units: a signal-dependent shot
// term (scaled Poisson) plus signal-independent Gaussian read noise,
//   x = sigma_s_sq * Poisson(y / sigma_s_sq) + N(0, sigma_r^2),
// so E[x] = y and Var[x] = sigma_s_sq * y + sigma_r^2. sigma_s_sq == 0
// degenerates to x = y + read noise with the shot term exactly y.
struct NoiseParams {
  double sigma_s_sq = 0.0;
  double sigma_r = 0.0;
};

double noise_variance(const NoiseParams& params, double signal);

// Samples are intentionally unclamped: values below 0 / above 1 are real
// outputs of the model and only clip when quantized to files.
Tensor sample_noise(const Tensor& clean, const NoiseParams& params, Rng& rng);

// Per-ISO calibration table, stored as a text file:
//   units normalized
//   iso 1600
//   sigma_s_sq 0.004
//   sigma_r 0.02
//   iso 3200 ...
struct NoiseTable {
  std::vector<std::pair<int, NoiseParams>> entries;

  const NoiseParams& lookup(int iso) const;
};

NoiseTable load_noise_table(const std::string& path);
void save_noise_table(const std::string& path, const NoiseTable& table);

// Photon-transfer calibration from flat-field stacks. Per-pixel temporal
// means and unbiased variances are aggregated spatially per stack; the read
// variance comes from the bias stack; sigma_s_sq is the slope of the
// least-squares line through (mean, variance - read_var).
struct ExposurePoint {
  double mean = 0.0;
  double variance = 0.0;  // total temporal variance, spatially aggregated
};

struct CalibrationResult {
  NoiseParams params;
  double read_variance = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<ExposurePoint> points;
};

CalibrationResult estimate_noise_params(const std::vector<std::vector<Tensor>>& exposure_stacks,
                                        const std::vector<Tensor>& bias_stack);

// Clean normalized sequence -> noisy sequence. Frame i draws from the
// substream mix(seed, i) so any frame can be regenerated independently.
Sequence synthesize_noisy_sequence(const Sequence& clean, const NoiseParams& params,
                                   std::uint64_t seed);

// sRGB rendering -> synthetic normalized mosaic via the inverse reference
// pipeline; the usual source of clean raws when only processed footage exists.
Tensor unprocess_srgb(const Tensor& srgb, BayerPattern pattern, const IspConfig& config);

}  // namespace rvd
