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

#include <utility>
#include <vector>

#include "rvdlab/bayer.hpp"
#include "rvdlab/modules.hpp"

namespace rvd {

// Architecture configuration for the multi-frame denoiser. The four ablation
// switches mirror the cumulative study ladder:
//  * raw_domain:        denoise raw mosaics (true) or already-rendered sRGB
//                       frames (false);
//  * packing:           split the mosaic into four color-plane sub-sequences
//                       processed at `channels` features each (true), or run
//                       one full-resolution stream at 4x width (false);
//  * predenoise_guided: estimate alignment offsets from pre-denoised frames
//                       (true) or from the noisy frames themselves (false);
//  * nonlocal:          enable the attention module between alignment and
//                       temporal fusion.
struct VideNetSpec {
  int channels = 16;       // per-plane feature width C
  int frames = 3;          // temporal window T = 2N+1 (odd)
  int pyramid_levels = 3;  // alignment pyramid depth L
  int fusion_blocks = 10;  // residual blocks in spatial fusion
  bool raw_domain = true;
  bool packing = true;
  bool predenoise_guided = true;
  bool nonlocal = true;
  bool two_pass_spatial = false;  // second criss-cross sweep

  void validate() const;
  KvRecords to_records() const;
  static VideNetSpec from_records(const KvRecords& records);

  // Streams and widths implied by the switches.
  int stream_count() const { return packing ? 4 : 1; }
  int stream_in_channels() const { return packing ? 1 : (raw_domain ? 1 : 3); }
  int stream_channels() const { return packing ? channels : 4 * channels; }
  int fusion_channels() const { return 4 * channels; }
  int output_channels() const { return packing ? 4 : (raw_domain ? 1 : 3); }
  int center_index() const { return frames / 2; }
};

// Structured record of one forward pass, used by structural assertions,
// offset dumps, and the alignment-accuracy oracle.
struct ForwardTrace {
  // Every predicted offset field (all levels, refinement included).
  std::vector<Var> offset_fields;
  // Per level: the offset field consumed by the noisy-stream warp and by the
  // guide-stream warp; the two entries of a pair must be the same node.
  std::vector<std::pair<Var, Var>> offset_uses;
  // Channel width after each spatial-fusion stage except the final output
  // convolution.
  std::vector<int> fusion_stage_channels;
  // Refinement-pass offsets at full plane resolution, one tensor per
  // neighbor in frame order: (streams, 2K, h, w), dy-major per tap.
  std::vector<Tensor> final_offsets;
  // Predicted residual before the noisy center frame is added back.
  Var noise_estimate;
};

struct ForwardResult {
  Var output;  // denoised frame in the configured output domain
  ForwardTrace trace;
};

// Shared-weight pyramid feature extractor (applied to both the noisy and the
// pre-denoised streams).
class FeatureExtractor : public Module {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(int in_channels, int channels, int levels, Rng& rng);

  // x: (B, in_channels, H, W) -> vector of L levels, [0] at full resolution.
  std::vector<Var> forward(Tape& tape, const Var& x) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

 private:
  Conv2dLayer conv_in_;
  ResBlock res1_, res2_;
  std::vector<Conv2dLayer> down_;
  std::vector<ResBlock> down_res_;
  int levels_ = 3;
};

// Predicts a sampling-offset field and its modulation map from the guide
// features of a neighbor/center pair, optionally conditioned on the coarser
// level's upsampled field. The final layer is zero-initialized: at the start
// of training offsets are exactly zero and modulation is 0.5 everywhere.
class OffsetPredictor : public Module {
 public:
  OffsetPredictor() = default;
  OffsetPredictor(int channels, bool with_coarser, Rng& rng);

  struct Field {
    Var offsets;     // (B, 2K, H, W), dy before dx per tap
    Var modulation;  // (B, K, H, W), sigmoid-bounded
  };

  Field forward(Tape& tape, const Var& guide_neighbor, const Var& guide_center,
                const Var& coarser_offsets, const Var& coarser_modulation) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

  static constexpr int kTaps = 9;  // 3x3 deformable kernel

 private:
  Conv2dLayer c1_;
  Conv2dLayer c2_;
  bool with_coarser_ = false;
};

// Pyramidal alignment of one neighbor frame onto the center frame. Offsets
// are predicted from guide features only; the identical field warps both the
// noisy and the guide stream at every level.
class AlignmentModule : public Module {
 public:
  AlignmentModule() = default;
  AlignmentModule(int channels, int levels, Rng& rng);

  // Pyramids are level-indexed [0]=fine; every Var is (B, C, h_l, w_l) with
  // B = stream_count. Returns aligned noisy features at full resolution.
  Var align(Tape& tape, const std::vector<Var>& noisy_neighbor,
            const std::vector<Var>& guide_neighbor, const std::vector<Var>& guide_center,
            ForwardTrace& trace) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

 private:
  std::vector<OffsetPredictor> pred_;   // per level, [0]=fine
  std::vector<DeformConvLayer> dconv_;  // per level, shared by both streams
  std::vector<Conv2dLayer> blend_n1_, blend_n2_;  // noisy-stream merge g
  std::vector<Conv2dLayer> blend_g1_, blend_g2_;  // guide-stream merge g
  OffsetPredictor refine_pred_;
  DeformConvLayer refine_dconv_;
  int levels_ = 3;
};

// Separated non-local attention: criss-cross spatial attention per frame,
// channel attention per frame, temporal attention across frames; branch
// outputs and the input are summed (residual). All three output projections
// are zero-initialized, so the module starts as the identity.
class NonlocalAttention : public Module {
 public:
  NonlocalAttention() = default;
  NonlocalAttention(int channels, bool two_pass_spatial, Rng& rng);

  // stack: (T, C, H, W) for one color plane.
  Var forward(Tape& tape, const Var& stack) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

 private:
  Var spatial_pass(Tape& tape, const Var& x) const;

  Conv2dLayer q_, k_, v_;
  Conv2dLayer out_spatial_, out_channel_, out_temporal_;
  bool two_pass_ = false;
};

// Element-wise temporal fusion: per-position feature similarity against the
// center frame (sigmoid of a channel dot product) weights each slice; the
// concatenated weighted slices are aggregated and gated by a two-level
// pyramid spatial-attention mask.
class TemporalFusion : public Module {
 public:
  TemporalFusion() = default;
  TemporalFusion(int channels, int frames, Rng& rng);

  // stack: (T, C, H, W) one plane -> (1, C, H, W).
  Var forward(Tape& tape, const Var& stack) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

 private:
  Conv2dLayer embed_;
  Conv2dLayer aggregate_;
  Conv2dLayer mask_fine_, mask_coarse_, mask_out_;
  int frames_ = 3;
};

// Joins the per-plane fused features, runs the residual-block trunk with a
// convolutional block-attention stage, and predicts the residual noise. All
// trunk convolutions carry fusion_channels() channels; only the final output
// convolution (zero-initialized) changes width.
class SpatialFusion : public Module {
 public:
  SpatialFusion() = default;
  SpatialFusion(int channels, int blocks, int out_channels, Rng& rng);

  Var forward(Tape& tape, const Var& fused, ForwardTrace& trace) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

 private:
  std::vector<ResBlock> blocks_;
  Conv2dLayer mlp1_, mlp2_;   // channel-attention bottleneck (reduction 4)
  Conv2dLayer spatial_att_;   // 7x7 over pooled maps
  Conv2dLayer out_;
};

// The full multi-frame denoiser.
class VideNet : public Module {
 public:
  VideNet() = default;
  VideNet(const VideNetSpec& spec, Rng& rng);

  // noisy_frames: (T, stream_in_channels * stream_count, h, w) — packed
  //   planes when packing is on, otherwise the mosaic or sRGB frames.
  // guide_frames: same shape, the pre-denoised version (pass the noisy
  //   tensor when predenoise_guided is off; it is then ignored).
  // center_reference: the noisy center frame in the output domain, added to
  //   the predicted residual: (1,1,2h,2w) packed / (1,1,h,w) mosaic /
  //   (1,3,h,w) sRGB.
  ForwardResult forward(Tape& tape, const Tensor& noisy_frames, const Tensor& guide_frames,
                        const Tensor& center_reference, BayerPattern pattern) const;

  void collect(const std::string& prefix, std::vector<Param*>& out) override;
  const VideNetSpec& spec() const { return spec_; }

 private:
  VideNetSpec spec_;
  FeatureExtractor extractor_;
  AlignmentModule alignment_;
  NonlocalAttention attention_;
  TemporalFusion temporal_;
  SpatialFusion spatial_;
};

}  // namespace rvd
