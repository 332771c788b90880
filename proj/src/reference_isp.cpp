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

#include "rvdlab/reference_isp.hpp"

#include <algorithm>
#include <cmath>

#include "rvdlab/text_io.hpp"

namespace rvd {

namespace {

// CFA channel at mosaic position parity: 0=R, 1=G, 2=B.
struct CfaLayout {
  int channel[2][2];        // channel at (y%2, x%2)
  bool red_row[2];          // does row parity y hold the red samples
};

CfaLayout layout_for(BayerPattern pattern) {
  const auto phases = plane_phases(pattern);
  CfaLayout l{};
  l.channel[phases[kPlaneR].dy][phases[kPlaneR].dx] = 0;
  l.channel[phases[kPlaneG1].dy][phases[kPlaneG1].dx] = 1;
  l.channel[phases[kPlaneB].dy][phases[kPlaneB].dx] = 2;
  l.channel[phases[kPlaneG2].dy][phases[kPlaneG2].dx] = 1;
  l.red_row[phases[kPlaneR].dy] = true;
  l.red_row[phases[kPlaneB].dy] = false;
  return l;
}

}  // namespace

void validate_isp_config(const IspConfig& config) {
  for (double g : config.wb_gains) {
    require(g > 0.0, ErrorKind::parameter, "white-balance gains must be positive");
  }
  require(config.gamma > 0.0 && config.gamma <= 1.0, ErrorKind::parameter,
          "gamma encode exponent must be in (0,1]");
  std::array<double, 9> inv;
  require(invert3x3(config.ccm, &inv), ErrorKind::parameter,
          "color matrix is not invertible");
}

IspConfig load_isp_config(const std::string& path) {
  const KvRecords records = read_kv_file(path);
  IspConfig config;
  std::string value;
  if (find_value(records, "wb_gains", &value)) {
    const auto v = parse_doubles(value, path + ": wb_gains");
    require(v.size() == 3, ErrorKind::configuration, path + ": wb_gains needs 3 values");
    std::copy(v.begin(), v.end(), config.wb_gains.begin());
  }
  if (find_value(records, "ccm", &value)) {
    const auto v = parse_doubles(value, path + ": ccm");
    require(v.size() == 9, ErrorKind::configuration, path + ": ccm needs 9 values");
    std::copy(v.begin(), v.end(), config.ccm.begin());
  }
  if (find_value(records, "gamma", &value)) {
    config.gamma = parse_double(value, path + ": gamma");
  }
  validate_isp_config(config);
  return config;
}

void save_isp_config(const std::string& path, const IspConfig& config) {
  KvRecords records;
  std::string gains = format_double(config.wb_gains[0]);
  for (int i = 1; i < 3; ++i) gains += " " + format_double(config.wb_gains[i]);
  std::string ccm = format_double(config.ccm[0]);
  for (int i = 1; i < 9; ++i) ccm += " " + format_double(config.ccm[i]);
  records.emplace_back("wb_gains", gains);
  records.emplace_back("ccm", ccm);
  records.emplace_back("gamma", format_double(config.gamma));
  write_kv_file(path, records);
}

bool invert3x3(const std::array<double, 9>& m, std::array<double, 9>* out) {
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
                     m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  if (std::abs(det) < 1e-12) return false;
  const double inv_det = 1.0 / det;
  std::array<double, 9>& o = *out;
  o[0] = (m[4] * m[8] - m[5] * m[7]) * inv_det;
  o[1] = (m[2] * m[7] - m[1] * m[8]) * inv_det;
  o[2] = (m[1] * m[5] - m[2] * m[4]) * inv_det;
  o[3] = (m[5] * m[6] - m[3] * m[8]) * inv_det;
  o[4] = (m[0] * m[8] - m[2] * m[6]) * inv_det;
  o[5] = (m[2] * m[3] - m[0] * m[5]) * inv_det;
  o[6] = (m[3] * m[7] - m[4] * m[6]) * inv_det;
  o[7] = (m[1] * m[6] - m[0] * m[7]) * inv_det;
  o[8] = (m[0] * m[4] - m[1] * m[3]) * inv_det;
  return true;
}

Tensor demosaic_bilinear(const Tensor& mosaic, BayerPattern pattern) {
  require(mosaic.ndim() == 2, ErrorKind::dimension, "demosaic expects (H,W) mosaic");
  const int h = mosaic.dim(0), w = mosaic.dim(1);
  require(h >= 2 && w >= 2, ErrorKind::dimension, "mosaic too small to demosaic");
  const CfaLayout layout = layout_for(pattern);
  Tensor rgb({3, h, w});
  const double* src = mosaic.data();
  auto sample = [&](int y, int x) {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return src[static_cast<std::size_t>(y) * w + x];
  };
  auto avg2h = [&](int y, int x) { return 0.5 * (sample(y, x - 1) + sample(y, x + 1)); };
  auto avg2v = [&](int y, int x) { return 0.5 * (sample(y - 1, x) + sample(y + 1, x)); };
  auto avg4cross = [&](int y, int x) {
    return 0.25 * (sample(y - 1, x) + sample(y + 1, x) + sample(y, x - 1) + sample(y, x + 1));
  };
  auto avg4diag = [&](int y, int x) {
    return 0.25 * (sample(y - 1, x - 1) + sample(y - 1, x + 1) + sample(y + 1, x - 1) +
                   sample(y + 1, x + 1));
  };
  double* out = rgb.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int site = layout.channel[y % 2][x % 2];
      double r, g, b;
      if (site == 0) {  // red site
        r = src[i];
        g = avg4cross(y, x);
        b = avg4diag(y, x);
      } else if (site == 2) {  // blue site
        b = src[i];
        g = avg4cross(y, x);
        r = avg4diag(y, x);
      } else {  // green site: red neighbors sit in the red rows
        g = src[i];
        if (layout.red_row[y % 2]) {
          r = avg2h(y, x);
          b = avg2v(y, x);
        } else {
          r = avg2v(y, x);
          b = avg2h(y, x);
        }
      }
      out[i] = r;
      out[plane + i] = g;
      out[2 * plane + i] = b;
    }
  }
  return rgb;
}

Tensor isp_forward(const Tensor& mosaic, BayerPattern pattern, const IspConfig& config) {
  validate_isp_config(config);
  Tensor rgb = demosaic_bilinear(mosaic, pattern);
  const int h = rgb.dim(1), w = rgb.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double* px = rgb.data();
  const auto& m = config.ccm;
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = px[i] * config.wb_gains[0];
    const double g = px[plane + i] * config.wb_gains[1];
    const double b = px[2 * plane + i] * config.wb_gains[2];
    double cr = m[0] * r + m[1] * g + m[2] * b;
    double cg = m[3] * r + m[4] * g + m[5] * b;
    double cb = m[6] * r + m[7] * g + m[8] * b;
    cr = std::clamp(cr, 0.0, 1.0);
    cg = std::clamp(cg, 0.0, 1.0);
    cb = std::clamp(cb, 0.0, 1.0);
    px[i] = std::pow(cr, config.gamma);
    px[plane + i] = std::pow(cg, config.gamma);
    px[2 * plane + i] = std::pow(cb, config.gamma);
  }
  return rgb;
}

Tensor isp_inverse(const Tensor& srgb, BayerPattern pattern, const IspConfig& config) {
  validate_isp_config(config);
  require(srgb.ndim() == 3 && srgb.dim(0) == 3, ErrorKind::dimension,
          "inverse pipeline expects (3,H,W)");
  const int h = srgb.dim(1), w = srgb.dim(2);
  std::array<double, 9> inv;
  invert3x3(config.ccm, &inv);
  const double decode = 1.0 / config.gamma;
  const CfaLayout layout = layout_for(pattern);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const double* px = srgb.data();
  Tensor mosaic({h, w});
  double* out = mosaic.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double r = std::pow(std::max(px[i], 0.0), decode);
      const double g = std::pow(std::max(px[plane + i], 0.0), decode);
      const double b = std::pow(std::max(px[2 * plane + i], 0.0), decode);
      const double lin[3] = {
          (inv[0] * r + inv[1] * g + inv[2] * b) / config.wb_gains[0],
          (inv[3] * r + inv[4] * g + inv[5] * b) / config.wb_gains[1],
          (inv[6] * r + inv[7] * g + inv[8] * b) / config.wb_gains[2],
      };
      out[i] = lin[layout.channel[y % 2][x % 2]];
    }
  }
  return mosaic;
}

}  // namespace rvd
