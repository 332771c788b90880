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

#include "rvdlab/bayer.hpp"
#include "rvdlab/tensor.hpp"
#include "rvdlab/text_io.hpp"

namespace rvd {

// A directory of consecutively numbered 16-bit PGM mosaics plus a
// `sequence.meta` sidecar. Frames are stored as (H,W) tensors; the
// `normalized` flag says whether values are DNs or [0,1].
struct Sequence {
  std::string name;
  FrameMeta meta;
  std::vector<Tensor> frames;
  bool normalized = false;

  int height() const { return frames.empty() ? 0 : frames.front().dim(0); }
  int width() const { return frames.empty() ? 0 : frames.front().dim(1); }
  int frame_count() const { return static_cast<int>(frames.size()); }
};

inline constexpr const char* kSidecarName = "sequence.meta";

// Sidecar keys: pattern and bit_depth are required; black_level defaults to
// 0, white_level to 2^bit_depth - 1, iso/frame_rate to 0 (unknown) and role
// to "unknown". Defaults are applied explicitly, never silently as zeros for
// required keys.
FrameMeta parse_meta(const KvRecords& records, const std::string& origin);
KvRecords meta_to_records(const FrameMeta& meta);

Sequence load_sequence(const std::string& dir);
void save_sequence(const std::string& dir, const Sequence& seq);

// In-place normalization of every frame using the sidecar black/white levels.
void normalize_sequence(Sequence& seq);

// Frame file name for index i: zero-padded to 7 digits, ".pgm".
std::string frame_file_name(int index);

}  // namespace rvd
