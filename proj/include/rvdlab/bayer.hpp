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

#include "rvdlab/common.hpp"
#include "rvdlab/tensor.hpp"

namespace rvd {

enum class BayerPattern { RGGB, BGGR, GRBG, GBRG };

BayerPattern parse_pattern(const std::string& name);
const char* to_string(BayerPattern pattern);

struct PlanePhase {
  int dy = 0;
  int dx = 0;
};

// Offsets of the four canonical planes inside each 2x2 Bayer cell. The plane
// order is fixed as [R, G1, B, G2] for every pattern, where G1 is the green
// sample sharing a row with R and G2 the green sharing a row with B. Packing
// any pattern therefore yields the same channel semantics downstream.
inline constexpr int kPlaneR = 0;
inline constexpr int kPlaneG1 = 1;
inline constexpr int kPlaneB = 2;
inline constexpr int kPlaneG2 = 3;

std::array<PlanePhase, 4> plane_phases(BayerPattern pattern);

// Splits an (H,W) mosaic with even dims into 4 half-resolution planes
// (4, H/2, W/2) in canonical order. Bit-exact inverse: unpack_planes.
Tensor pack_planes(const Tensor& mosaic, BayerPattern pattern);
Tensor unpack_planes(const Tensor& planes, BayerPattern pattern);

// Per-frame capture metadata, read from the sequence sidecar.
struct FrameMeta {
  BayerPattern pattern = BayerPattern::RGGB;
  int bit_depth = 0;
  double black_level = 0.0;
  double white_level = 0.0;
  int iso = 0;           // 0 = unknown
  double frame_rate = 0; // 0 = unknown
  std::string role = "unknown";
};

// One raw frame: mosaic samples plus a normalization flag. Values are sensor
// DNs until normalize() maps them to [0,1].
struct BayerFrame {
  Tensor mosaic;  // (H,W)
  bool normalized = false;

  int height() const { return mosaic.dim(0); }
  int width() const { return mosaic.dim(1); }
};

// (v - black) / (white - black), clamped to [0,1]. Raises a state error if
// the frame is already normalized and a parameter error if black >= white.
void normalize_frame(BayerFrame& frame, double black_level, double white_level);

// Maps normalized values back to DNs (no rounding; clamping happens when the
// result is quantized for file output).
Tensor denormalize(const Tensor& normalized, double black_level, double white_level);

}  // namespace rvd
