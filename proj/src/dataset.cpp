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

#include "rvdlab/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace rvd {

namespace {
constexpr double kTwoPi = 6.283185307179586;
}

ProceduralScene::ProceduralScene(const SceneSpec& spec) : spec_(spec) {
  require(spec_.height > 0 && spec_.width > 0 && spec_.height % 2 == 0 && spec_.width % 2 == 0,
          ErrorKind::parameter, "scene dims must be positive and even");
  require(spec_.frames >= 1, ErrorKind::parameter, "scene needs at least one frame");
  Rng rng(mix_seed(spec_.seed, 0x5CE11E));
  for (int c = 0; c < 3; ++c) {
    base_[c] = rng.uniform(0.35, 0.55);
    for (int k = 0; k < 3; ++k) {
      Wave w;
      w.amp = rng.uniform(0.04, 0.12);
      const double wavelength = rng.uniform(8.0, 32.0);
      const double angle = rng.uniform(0.0, kTwoPi);
      w.fy = std::sin(angle) / wavelength;
      w.fx = std::cos(angle) / wavelength;
      w.phase = rng.uniform(0.0, kTwoPi);
      waves_[c].push_back(w);
    }
  }
  const int blob_count = 5;
  for (int i = 0; i < blob_count; ++i) {
    Blob b;
    b.cy = rng.uniform(0.1, 0.9) * spec_.height;
    b.cx = rng.uniform(0.1, 0.9) * spec_.width;
    b.radius = rng.uniform(3.0, 10.0);
    b.vy = rng.uniform(-spec_.blob_drift, spec_.blob_drift);
    b.vx = rng.uniform(-spec_.blob_drift, spec_.blob_drift);
    for (double& a : b.amp) a = rng.uniform(-0.3, 0.3);
    blobs_.push_back(b);
  }
}

Tensor ProceduralScene::rgb_frame(int t) const {
  require(t >= 0 && t < spec_.frames, ErrorKind::parameter, "frame index out of range");
  Tensor out({3, spec_.height, spec_.width});
  const double ty = spec_.shift_y * t;
  const double tx = spec_.shift_x * t;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < spec_.height; ++y) {
      for (int x = 0; x < spec_.width; ++x) {
        // Content translates by (ty, tx): sample scene coordinates behind it.
        const double sy = y - ty;
        const double sx = x - tx;
        double v = base_[c];
        for (const Wave& w : waves_[c]) {
          v += w.amp * std::sin(kTwoPi * (w.fy * sy + w.fx * sx) + w.phase);
        }
        for (const Blob& b : blobs_) {
          const double dy = sy - (b.cy + b.vy * t);
          const double dx = sx - (b.cx + b.vx * t);
          const double d2 = dy * dy + dx * dx;
          v += b.amp[c] * std::exp(-d2 / (2.0 * b.radius * b.radius));
        }
        out[(static_cast<std::size_t>(c) * spec_.height + y) * static_cast<std::size_t>(spec_.width) + x] =
            std::min(0.98, std::max(0.02, v));
      }
    }
  }
  return out;
}

Tensor ProceduralScene::mosaic_frame(int t, BayerPattern pattern) const {
  const Tensor rgb = rgb_frame(t);
  Tensor mosaic({spec_.height, spec_.width});
  const auto phases = plane_phases(pattern);
  // Channel index (0=R,1=G,2=B) of each position in the 2x2 cell.
  int cell[2][2] = {};
  cell[phases[kPlaneR].dy][phases[kPlaneR].dx] = 0;
  cell[phases[kPlaneG1].dy][phases[kPlaneG1].dx] = 1;
  cell[phases[kPlaneG2].dy][phases[kPlaneG2].dx] = 1;
  cell[phases[kPlaneB].dy][phases[kPlaneB].dx] = 2;
  for (int y = 0; y < spec_.height; ++y) {
    for (int x = 0; x < spec_.width; ++x) {
      const int c = cell[y % 2][x % 2];
      mosaic[static_cast<std::size_t>(y) * spec_.width + x] =
          rgb[(static_cast<std::size_t>(c) * spec_.height + y) * static_cast<std::size_t>(spec_.width) +
              x];
    }
  }
  return mosaic;
}

Sequence make_clean_sequence(const SceneSpec& spec, BayerPattern pattern, int bit_depth) {
  ProceduralScene scene(spec);
  Sequence seq;
  seq.name = "scene_" + std::to_string(spec.seed);
  seq.meta.pattern = pattern;
  seq.meta.bit_depth = bit_depth;
  seq.meta.black_level = 0.0;
  seq.meta.white_level = static_cast<double>((1 << bit_depth) - 1);
  seq.meta.role = "clean";
  seq.normalized = true;
  for (int t = 0; t < spec.frames; ++t) seq.frames.push_back(scene.mosaic_frame(t, pattern));
  return seq;
}

PatchPos sample_patch_pos(Rng& rng, int height, int width, int patch) {
  require(patch > 0 && patch % 2 == 0, ErrorKind::parameter, "patch size must be even");
  require(patch <= height && patch <= width, ErrorKind::dimension,
          "patch larger than the frame");
  const int ymax = (height - patch) / 2;
  const int xmax = (width - patch) / 2;
  PatchPos pos;
  pos.y0 = 2 * static_cast<int>(rng.uniform_int(0, ymax));
  pos.x0 = 2 * static_cast<int>(rng.uniform_int(0, xmax));
  return pos;
}

Tensor crop_hw(const Tensor& t, int y0, int x0, int h, int w) {
  require(t.ndim() == 2 || t.ndim() == 3, ErrorKind::dimension, "crop expects (H,W) or (C,H,W)");
  const int channels = t.ndim() == 3 ? t.dim(0) : 1;
  const int th = t.dim(t.ndim() - 2), tw = t.dim(t.ndim() - 1);
  require(y0 >= 0 && x0 >= 0 && h > 0 && w > 0 && y0 + h <= th && x0 + w <= tw,
          ErrorKind::dimension, "crop window out of bounds");
  Tensor out(t.ndim() == 3 ? std::vector<int>{channels, h, w} : std::vector<int>{h, w});
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out[(static_cast<std::size_t>(c) * h + y) * static_cast<std::size_t>(w) + x] =
            t[(static_cast<std::size_t>(c) * th + (y0 + y)) * static_cast<std::size_t>(tw) +
              (x0 + x)];
      }
    }
  }
  return out;
}

namespace {
int reflect_index(int i, int n) {
  // Mirror without repeating the border: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}
}  // namespace

Tensor reflect_pad_hw(const Tensor& t, int top, int bottom, int left, int right) {
  require(t.ndim() == 2 || t.ndim() == 3, ErrorKind::dimension, "pad expects (H,W) or (C,H,W)");
  require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, ErrorKind::parameter,
          "pad amounts must be non-negative");
  const int channels = t.ndim() == 3 ? t.dim(0) : 1;
  const int h = t.dim(t.ndim() - 2), w = t.dim(t.ndim() - 1);
  const int ho = h + top + bottom, wo = w + left + right;
  Tensor out(t.ndim() == 3 ? std::vector<int>{channels, ho, wo} : std::vector<int>{ho, wo});
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < ho; ++y) {
      const int sy = reflect_index(y - top, h);
      for (int x = 0; x < wo; ++x) {
        const int sx = reflect_index(x - left, w);
        out[(static_cast<std::size_t>(c) * ho + y) * static_cast<std::size_t>(wo) + x] =
            t[(static_cast<std::size_t>(c) * h + sy) * static_cast<std::size_t>(w) + sx];
      }
    }
  }
  return out;
}

}  // namespace rvd
