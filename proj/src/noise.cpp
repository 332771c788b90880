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

#include "rvdlab/noise.hpp"

#include <cmath>

#include "rvdlab/text_io.hpp"

namespace rvd {

double noise_variance(const NoiseParams& params, double signal) {
  return params.sigma_s_sq * std::max(signal, 0.0) + params.sigma_r * params.sigma_r;
}

Tensor sample_noise(const Tensor& clean, const NoiseParams& params, Rng& rng) {
  require(params.sigma_s_sq >= 0.0 && params.sigma_r >= 0.0, ErrorKind::parameter,
          "noise parameters must be non-negative");
  Tensor noisy = clean.clone();
  double* px = noisy.data();
  const std::size_t n = noisy.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double y = px[i];
    double shot = y;
    if (params.sigma_s_sq > 0.0) {
      shot = params.sigma_s_sq * rng.poisson(y / params.sigma_s_sq);
    }
    px[i] = shot + rng.normal(0.0, params.sigma_r);
  }
  return noisy;
}

const NoiseParams& NoiseTable::lookup(int iso) const {
  for (const auto& [entry_iso, params] : entries) {
    if (entry_iso == iso) return params;
  }
  fail(ErrorKind::metadata, "no noise parameters for iso " + std::to_string(iso));
}

NoiseTable load_noise_table(const std::string& path) {
  const KvRecords records = read_kv_file(path);
  const std::string units = require_value(records, "units", path);
  require(units == "normalized", ErrorKind::metadata,
          path + ": units must be 'normalized', got '" + units + "'");
  NoiseTable table;
  int current_iso = -1;
  bool have_s = false, have_r = false;
  NoiseParams current;
  auto flush = [&]() {
    if (current_iso < 0) return;
    require(have_s && have_r, ErrorKind::metadata,
            path + ": iso " + std::to_string(current_iso) + " entry is incomplete");
    require(current.sigma_s_sq >= 0.0 && current.sigma_r >= 0.0, ErrorKind::parameter,
            path + ": noise parameters must be non-negative");
    table.entries.emplace_back(current_iso, current);
  };
  for (const auto& [key, value] : records) {
    if (key == "units") continue;
    if (key == "iso") {
      flush();
      current_iso = static_cast<int>(parse_long(value, path + ": iso"));
      have_s = have_r = false;
      current = NoiseParams{};
    } else if (key == "sigma_s_sq") {
      require(current_iso >= 0, ErrorKind::metadata, path + ": sigma_s_sq before any iso");
      current.sigma_s_sq = parse_double(value, path + ": sigma_s_sq");
      have_s = true;
    } else if (key == "sigma_r") {
      require(current_iso >= 0, ErrorKind::metadata, path + ": sigma_r before any iso");
      current.sigma_r = parse_double(value, path + ": sigma_r");
      have_r = true;
    } else {
      fail(ErrorKind::metadata, path + ": unknown key '" + key + "'");
    }
  }
  flush();
  require(!table.entries.empty(), ErrorKind::metadata, path + ": empty noise table");
  return table;
}

void save_noise_table(const std::string& path, const NoiseTable& table) {
  KvRecords records;
  records.emplace_back("units", "normalized");
  for (const auto& [iso, params] : table.entries) {
    records.emplace_back("iso", std::to_string(iso));
    records.emplace_back("sigma_s_sq", format_double(params.sigma_s_sq));
    records.emplace_back("sigma_r", format_double(params.sigma_r));
  }
  write_kv_file(path, records);
}

namespace {

// Spatial mean of per-pixel temporal means and of per-pixel unbiased
// temporal variances over one stack of same-sized frames.
ExposurePoint stack_statistics(const std::vector<Tensor>& stack, const std::string& what) {
  require(stack.size() >= 2, ErrorKind::insufficient_data,
          what + ": need at least 2 frames per stack");
  const std::size_t n_px = stack.front().size();
  for (const auto& frame : stack) {
    require(frame.size() == n_px && frame.same_shape(stack.front()), ErrorKind::consistency,
            what + ": stack frames differ in shape");
  }
  const double n = static_cast<double>(stack.size());
  ExposurePoint point;
  double mean_acc = 0.0, var_acc = 0.0;
  std::vector<const double*> frames;
  frames.reserve(stack.size());
  for (const auto& f : stack) frames.push_back(f.data());
  for (std::size_t i = 0; i < n_px; ++i) {
    double s = 0.0, s2 = 0.0;
    for (const double* f : frames) {
      s += f[i];
      s2 += f[i] * f[i];
    }
    const double mu = s / n;
    mean_acc += mu;
    var_acc += (s2 - n * mu * mu) / (n - 1.0);
  }
  point.mean = mean_acc / static_cast<double>(n_px);
  point.variance = var_acc / static_cast<double>(n_px);
  return point;
}

}  // namespace

CalibrationResult estimate_noise_params(const std::vector<std::vector<Tensor>>& exposure_stacks,
                                        const std::vector<Tensor>& bias_stack) {
  require(exposure_stacks.size() >= 3, ErrorKind::insufficient_data,
          "need at least 3 exposure levels, got " + std::to_string(exposure_stacks.size()));

  CalibrationResult result;
  const ExposurePoint bias = stack_statistics(bias_stack, "bias stack");
  result.read_variance = bias.variance;

  for (std::size_t e = 0; e < exposure_stacks.size(); ++e) {
    result.points.push_back(
        stack_statistics(exposure_stacks[e], "exposure stack " + std::to_string(e)));
  }
  for (std::size_t a = 0; a < result.points.size(); ++a) {
    for (std::size_t b = a + 1; b < result.points.size(); ++b) {
      require(std::abs(result.points[a].mean - result.points[b].mean) > 1e-9,
              ErrorKind::insufficient_data,
              "exposure levels are not distinct (stacks " + std::to_string(a) + ", " +
                  std::to_string(b) + ")");
    }
  }

  // Least-squares line through (mean, variance - read_variance).
  const double n = static_cast<double>(result.points.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& p : result.points) {
    const double y = p.variance - result.read_variance;
    sx += p.mean;
    sy += y;
    sxx += p.mean * p.mean;
    sxy += p.mean * y;
  }
  const double denom = sxx - sx * sx / n;
  require(denom > 0.0, ErrorKind::insufficient_data, "exposure means are degenerate");
  result.slope = (sxy - sx * sy / n) / denom;
  result.intercept = (sy - result.slope * sx) / n;
  require(result.slope > 0.0, ErrorKind::calibration_quality,
          "fitted shot-noise slope is not positive; flat-field data is implausible");

  result.params.sigma_s_sq = result.slope;
  require(result.read_variance >= 0.0, ErrorKind::calibration_quality,
          "negative read variance from bias stack");
  result.params.sigma_r = std::sqrt(result.read_variance);
  return result;
}

Sequence synthesize_noisy_sequence(const Sequence& clean, const NoiseParams& params,
                                   std::uint64_t seed) {
  require(clean.normalized, ErrorKind::state, "synthesis expects a normalized clean sequence");
  Sequence noisy;
  noisy.name = clean.name + "_noisy";
  noisy.meta = clean.meta;
  noisy.meta.role = "noisy";
  noisy.normalized = true;
  noisy.frames.reserve(clean.frames.size());
  for (std::size_t i = 0; i < clean.frames.size(); ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    noisy.frames.push_back(sample_noise(clean.frames[i], params, rng));
  }
  return noisy;
}

Tensor unprocess_srgb(const Tensor& srgb, BayerPattern pattern, const IspConfig& config) {
  return isp_inverse(srgb, pattern, config);
}

}  // namespace rvd
