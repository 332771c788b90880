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

#include "rvdlab/modules.hpp"

namespace rvd {

// Encoder/decoder network over packed raw planes. Two roles share this class:
//  * single-frame pre-denoiser: 4 -> 4 channels, residual head (identity at
//    zero-initialized output), upscale 1;
//  * learned raw->sRGB converter: 4 -> 3 channels, upscale 2 (the head emits
//    out*4 channels that a pixel-order rearrangement expands to 2H x 2W).
struct UNetSpec {
  int in_channels = 4;
  int out_channels = 4;
  int depth = 4;          // number of stride-2 downsampling levels
  int base_channels = 32; // channels at full resolution (doubled per level)
  int max_channels = 256; // growth cap toward the bottleneck
  bool residual = false;  // add the input to the head output (in == out)
  int upscale = 1;        // 1 or 2; 2 appends a depth-to-space rearrangement

  KvRecords to_records() const;
  static UNetSpec from_records(const KvRecords& records);
  void validate() const;
  int level_channels(int level) const;
};

class UNet : public Module {
 public:
  UNet() = default;
  UNet(const UNetSpec& spec, Rng& rng);

  // Spatial dims must be divisible by 2^depth (callers pad at even Bayer
  // phase and crop afterwards).
  Var forward(Tape& tape, const Var& x) const;

  void collect(const std::string& prefix, std::vector<Param*>& out) override;
  const UNetSpec& spec() const { return spec_; }

 private:
  UNetSpec spec_;
  Conv2dLayer stem1_, stem2_;
  std::vector<Conv2dLayer> down_;      // stride-2 entry conv per level
  std::vector<Conv2dLayer> down_post_; // follow-up conv per level
  std::vector<Conv2dLayer> up_merge_;  // conv after upsample + skip concat
  std::vector<Conv2dLayer> up_post_;
  Conv2dLayer head_;
};

}  // namespace rvd
