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

#include <vector>

#include "rvdlab/rng.hpp"
#include "rvdlab/sequence.hpp"

namespace rvd {

// Procedurally generated moving scene: a smooth multi-wave background plus
// soft blobs, rendered in linear RGB and translating globally over time (with
// optional per-blob drift). Continuous evaluation gives true sub-pixel motion.
struct SceneSpec {
  int height = 64;   // mosaic rows (even)
  int width = 64;    // mosaic columns (even)
  int frames = 7;
  std::uint64_t seed = 1;
  double shift_y = 0.0;  // global translation per frame, pixels
  double shift_x = 1.0;
  double blob_drift = 0.5;  // extra per-blob motion amplitude (pixels/frame)
};

class ProceduralScene {
 public:
  explicit ProceduralScene(const SceneSpec& spec);

  Tensor rgb_frame(int t) const;                          // (3,H,W) linear [0,1]
  Tensor mosaic_frame(int t, BayerPattern pattern) const; // (H,W) normalized

 private:
  struct Wave {
    double amp, fy, fx, phase;
  };
  struct Blob {
    double cy, cx, radius;
    double vy, vx;
    double amp[3];
  };
  SceneSpec spec_;
  double base_[3] = {0, 0, 0};
  std::vector<Wave> waves_[3];
  std::vector<Blob> blobs_;
};

// Clean normalized sequence rendered from a procedural scene.
Sequence make_clean_sequence(const SceneSpec& spec, BayerPattern pattern, int bit_depth = 12);

// Even (Bayer-phase-aligned) top-left corner for a patch x patch crop.
struct PatchPos {
  int y0 = 0;
  int x0 = 0;
};
PatchPos sample_patch_pos(Rng& rng, int height, int width, int patch);

// Rank-2/rank-3 crop of the trailing two dims.
Tensor crop_hw(const Tensor& t, int y0, int x0, int h, int w);

// Mirror padding without repeating the border sample (indices reflect to the
// same parity, so mosaics keep their CFA phase when pads are even).
Tensor reflect_pad_hw(const Tensor& t, int top, int bottom, int left, int right);

}  // namespace rvd
