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

#include "rvdlab/bayer.hpp"

#include <algorithm>

namespace rvd {

BayerPattern parse_pattern(const std::string& name) {
  std::string up = name;
  std::transform(up.begin(), up.end(), up.begin(), ::toupper);
  if (up == "RGGB") return BayerPattern::RGGB;
  if (up == "BGGR") return BayerPattern::BGGR;
  if (up == "GRBG") return BayerPattern::GRBG;
  if (up == "GBRG") return BayerPattern::GBRG;
  fail(ErrorKind::pattern, "unknown CFA pattern '" + name + "'");
}

const char* to_string(BayerPattern pattern) {
  switch (pattern) {
    case BayerPattern::RGGB: return "RGGB";
    case BayerPattern::BGGR: return "BGGR";
    case BayerPattern::GRBG: return "GRBG";
    case BayerPattern::GBRG: return "GBRG";
  }
  return "?";
}

std::array<PlanePhase, 4> plane_phases(BayerPattern pattern) {
  // Canonical order [R, G1, B, G2]; G1 shares its row with R, G2 with B.
  switch (pattern) {
    case BayerPattern::RGGB:
      return {{{0, 0}, {0, 1}, {1, 1}, {1, 0}}};
    case BayerPattern::BGGR:
      return {{{1, 1}, {1, 0}, {0, 0}, {0, 1}}};
    case BayerPattern::GRBG:
      return {{{0, 1}, {0, 0}, {1, 0}, {1, 1}}};
    case BayerPattern::GBRG:
      return {{{1, 0}, {1, 1}, {0, 1}, {0, 0}}};
  }
  fail(ErrorKind::pattern, "invalid pattern enum");
}

Tensor pack_planes(const Tensor& mosaic, BayerPattern pattern) {
  require(mosaic.ndim() == 2, ErrorKind::dimension, "pack expects an (H,W) mosaic");
  const int h = mosaic.dim(0), w = mosaic.dim(1);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::dimension,
          "mosaic dims must be even to pack, got " + std::to_string(h) + "x" + std::to_string(w));
  const auto phases = plane_phases(pattern);
  const int ph = h / 2, pw = w / 2;
  Tensor planes({4, ph, pw});
  const double* src = mosaic.data();
  double* dst = planes.data();
  for (int p = 0; p < 4; ++p) {
    const auto [dy, dx] = phases[static_cast<std::size_t>(p)];
    for (int y = 0; y < ph; ++y) {
      const double* row = src + static_cast<std::size_t>(2 * y + dy) * w + dx;
      double* out = dst + (static_cast<std::size_t>(p) * ph + y) * pw;
      for (int x = 0; x < pw; ++x) out[x] = row[2 * x];
    }
  }
  return planes;
}

Tensor unpack_planes(const Tensor& planes, BayerPattern pattern) {
  require(planes.ndim() == 3 && planes.dim(0) == 4, ErrorKind::dimension,
          "unpack expects (4,H/2,W/2) planes");
  const int ph = planes.dim(1), pw = planes.dim(2);
  const auto phases = plane_phases(pattern);
  Tensor mosaic({2 * ph, 2 * pw});
  const double* src = planes.data();
  double* dst = mosaic.data();
  const int w = 2 * pw;
  for (int p = 0; p < 4; ++p) {
    const auto [dy, dx] = phases[static_cast<std::size_t>(p)];
    for (int y = 0; y < ph; ++y) {
      const double* in = src + (static_cast<std::size_t>(p) * ph + y) * pw;
      double* row = dst + static_cast<std::size_t>(2 * y + dy) * w + dx;
      for (int x = 0; x < pw; ++x) row[2 * x] = in[x];
    }
  }
  return mosaic;
}

void normalize_frame(BayerFrame& frame, double black_level, double white_level) {
  require(!frame.normalized, ErrorKind::state, "frame is already normalized");
  require(black_level < white_level, ErrorKind::parameter,
          "black level must be below white level");
  const double inv = 1.0 / (white_level - black_level);
  double* px = frame.mosaic.data();
  const std::size_t n = frame.mosaic.size();
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = std::clamp((px[i] - black_level) * inv, 0.0, 1.0);
  }
  frame.normalized = true;
}

Tensor denormalize(const Tensor& normalized, double black_level, double white_level) {
  Tensor out = normalized.clone();
  const double span = white_level - black_level;
  double* px = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) px[i] = px[i] * span + black_level;
  return out;
}

}  // namespace rvd
