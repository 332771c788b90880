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

#include "rvdlab/videnet.hpp"

#include <algorithm>

#include "rvdlab/attention_ops.hpp"
#include "rvdlab/deform_conv.hpp"

namespace rvd {

namespace {
constexpr double kSlope = 0.1;

bool flag(const KvRecords& r, const std::string& key) {
  return parse_long(require_value(r, key)) != 0;
}
}  // namespace

void VideNetSpec::validate() const {
  require(channels > 0, ErrorKind::configuration, "feature width must be positive");
  require(frames >= 3 && frames % 2 == 1, ErrorKind::configuration,
          "temporal window must be odd and at least 3");
  require(pyramid_levels >= 1, ErrorKind::configuration, "pyramid needs at least one level");
  require(fusion_blocks >= 1, ErrorKind::configuration, "fusion needs at least one block");
  require(raw_domain || !packing, ErrorKind::configuration,
          "plane packing applies only to raw-domain input");
  require(raw_domain || !predenoise_guided, ErrorKind::configuration,
          "pre-denoised guidance applies only to raw-domain input");
}

KvRecords VideNetSpec::to_records() const {
  KvRecords r;
  r.emplace_back("channels", std::to_string(channels));
  r.emplace_back("frames", std::to_string(frames));
  r.emplace_back("pyramid_levels", std::to_string(pyramid_levels));
  r.emplace_back("fusion_blocks", std::to_string(fusion_blocks));
  r.emplace_back("raw_domain", raw_domain ? "1" : "0");
  r.emplace_back("packing", packing ? "1" : "0");
  r.emplace_back("predenoise_guided", predenoise_guided ? "1" : "0");
  r.emplace_back("nonlocal", nonlocal ? "1" : "0");
  r.emplace_back("two_pass_spatial", two_pass_spatial ? "1" : "0");
  return r;
}

VideNetSpec VideNetSpec::from_records(const KvRecords& r) {
  VideNetSpec s;
  s.channels = static_cast<int>(parse_long(require_value(r, "channels")));
  s.frames = static_cast<int>(parse_long(require_value(r, "frames")));
  s.pyramid_levels = static_cast<int>(parse_long(require_value(r, "pyramid_levels")));
  s.fusion_blocks = static_cast<int>(parse_long(require_value(r, "fusion_blocks")));
  s.raw_domain = flag(r, "raw_domain");
  s.packing = flag(r, "packing");
  s.predenoise_guided = flag(r, "predenoise_guided");
  s.nonlocal = flag(r, "nonlocal");
  s.two_pass_spatial = flag(r, "two_pass_spatial");
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Feature extractor

FeatureExtractor::FeatureExtractor(int in_channels, int channels, int levels, Rng& rng)
    : conv_in_(in_channels, channels, 3, 1, 1, InitKind::he_normal, rng),
      res1_(channels, rng),
      res2_(channels, rng),
      levels_(levels) {
  for (int l = 1; l < levels; ++l) {
    down_.emplace_back(channels, channels, 3, 2, 1, InitKind::he_normal, rng);
    down_res_.emplace_back(channels, rng);
  }
}

std::vector<Var> FeatureExtractor::forward(Tape& tape, const Var& x) const {
  Var h = leaky_relu(tape, conv_in_.forward(tape, x), kSlope);
  h = res2_.forward(tape, res1_.forward(tape, h));
  std::vector<Var> pyramid{h};
  for (std::size_t l = 0; l + 1 < static_cast<std::size_t>(levels_); ++l) {
    h = leaky_relu(tape, down_[l].forward(tape, h), kSlope);
    h = down_res_[l].forward(tape, h);
    pyramid.push_back(h);
  }
  return pyramid;
}

void FeatureExtractor::collect(const std::string& prefix, std::vector<Param*>& out) {
  conv_in_.collect(prefix + ".in", out);
  res1_.collect(prefix + ".res1", out);
  res2_.collect(prefix + ".res2", out);
  for (std::size_t l = 0; l < down_.size(); ++l) {
    down_[l].collect(prefix + ".down" + std::to_string(l), out);
    down_res_[l].collect(prefix + ".down_res" + std::to_string(l), out);
  }
}

// ---------------------------------------------------------------------------
// Offset prediction

OffsetPredictor::OffsetPredictor(int channels, bool with_coarser, Rng& rng)
    : with_coarser_(with_coarser) {
  const int in1 = 2 * channels + (with_coarser ? 3 * kTaps : 0);
  c1_ = Conv2dLayer(in1, channels, 3, 1, 1, InitKind::he_normal, rng);
  c2_ = Conv2dLayer(channels, 3 * kTaps, 3, 1, 1, InitKind::zero, rng);
}

OffsetPredictor::Field OffsetPredictor::forward(Tape& tape, const Var& guide_neighbor,
                                                const Var& guide_center,
                                                const Var& coarser_offsets,
                                                const Var& coarser_modulation) const {
  require(guide_neighbor->value.same_shape(guide_center->value), ErrorKind::pyramid,
          "offset prediction needs neighbor/center features at the same level");
  std::vector<Var> parts{guide_neighbor, guide_center};
  if (with_coarser_) {
    require(coarser_offsets && coarser_modulation, ErrorKind::pyramid,
            "this level expects an upsampled coarser offset field");
    parts.push_back(coarser_offsets);
    parts.push_back(coarser_modulation);
  } else {
    require(!coarser_offsets, ErrorKind::pyramid, "coarsest level takes no coarser field");
  }
  Var h = leaky_relu(tape, c1_.forward(tape, concat_channels(tape, parts)), kSlope);
  Var raw = c2_.forward(tape, h);
  // Keep sampling displacements bounded to a quarter of the level's extent.
  const double limit =
      std::max(guide_neighbor->value.dim(2), guide_neighbor->value.dim(3)) / 4.0;
  Field f;
  f.offsets = clamp(tape, slice_channels(tape, raw, 0, 2 * kTaps), -limit, limit);
  f.modulation = sigmoid(tape, slice_channels(tape, raw, 2 * kTaps, 3 * kTaps));
  return f;
}

void OffsetPredictor::collect(const std::string& prefix, std::vector<Param*>& out) {
  c1_.collect(prefix + ".c1", out);
  c2_.collect(prefix + ".c2", out);
}

// ---------------------------------------------------------------------------
// Alignment

AlignmentModule::AlignmentModule(int channels, int levels, Rng& rng) : levels_(levels) {
  for (int l = 0; l < levels; ++l) {
    pred_.emplace_back(channels, l < levels - 1, rng);
    dconv_.emplace_back(channels, channels, 3, InitKind::he_normal, rng);
  }
  for (int l = 0; l + 1 < levels; ++l) {
    blend_n1_.emplace_back(2 * channels, channels, 3, 1, 1, InitKind::he_normal, rng);
    blend_n2_.emplace_back(channels, channels, 3, 1, 1, InitKind::he_normal, rng);
    blend_g1_.emplace_back(2 * channels, channels, 3, 1, 1, InitKind::he_normal, rng);
    blend_g2_.emplace_back(channels, channels, 3, 1, 1, InitKind::he_normal, rng);
  }
  refine_pred_ = OffsetPredictor(channels, false, rng);
  refine_dconv_ = DeformConvLayer(channels, channels, 3, InitKind::he_normal, rng);
}

Var AlignmentModule::align(Tape& tape, const std::vector<Var>& noisy_neighbor,
                           const std::vector<Var>& guide_neighbor,
                           const std::vector<Var>& guide_center, ForwardTrace& trace) const {
  require(static_cast<int>(noisy_neighbor.size()) == levels_ &&
              static_cast<int>(guide_neighbor.size()) == levels_ &&
              static_cast<int>(guide_center.size()) == levels_,
          ErrorKind::pyramid, "alignment expects full pyramids");

  Var aligned_n, aligned_g;
  Var prev_off, prev_mod;
  for (int l = levels_ - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    Var coarser_off, coarser_mod;
    if (l < levels_ - 1) {
      // Offsets measured in pixels of their own level: doubling the grid
      // doubles the displacement magnitudes.
      coarser_off = scale(tape, upsample2x(tape, prev_off), 2.0);
      coarser_mod = upsample2x(tape, prev_mod);
    }
    OffsetPredictor::Field field =
        pred_[li].forward(tape, guide_neighbor[li], guide_center[li], coarser_off, coarser_mod);
    trace.offset_fields.push_back(field.offsets);

    Var warped_n = dconv_[li].forward(tape, noisy_neighbor[li], field.offsets, field.modulation);
    Var warped_g = dconv_[li].forward(tape, guide_neighbor[li], field.offsets, field.modulation);
    trace.offset_uses.emplace_back(warped_n->parents.at(1), warped_g->parents.at(1));

    if (l < levels_ - 1) {
      Var cat_n = concat_channels(tape, {warped_n, upsample2x(tape, aligned_n)});
      aligned_n = blend_n2_[li].forward(
          tape, leaky_relu(tape, blend_n1_[li].forward(tape, cat_n), kSlope));
      Var cat_g = concat_channels(tape, {warped_g, upsample2x(tape, aligned_g)});
      aligned_g = blend_g2_[li].forward(
          tape, leaky_relu(tape, blend_g1_[li].forward(tape, cat_g), kSlope));
    } else {
      aligned_n = warped_n;
      aligned_g = warped_g;
    }
    prev_off = field.offsets;
    prev_mod = field.modulation;
  }

  // Refinement: re-estimate offsets between the aligned guide features and
  // the center guide features, then re-warp the aligned noisy features.
  OffsetPredictor::Field refine =
      refine_pred_.forward(tape, aligned_g, guide_center[0], nullptr, nullptr);
  trace.offset_fields.push_back(refine.offsets);
  trace.final_offsets.push_back(refine.offsets->value.clone());
  return refine_dconv_.forward(tape, aligned_n, refine.offsets, refine.modulation);
}

void AlignmentModule::collect(const std::string& prefix, std::vector<Param*>& out) {
  for (std::size_t l = 0; l < pred_.size(); ++l) {
    pred_[l].collect(prefix + ".pred" + std::to_string(l), out);
    dconv_[l].collect(prefix + ".dconv" + std::to_string(l), out);
  }
  for (std::size_t l = 0; l < blend_n1_.size(); ++l) {
    blend_n1_[l].collect(prefix + ".blend_n1_" + std::to_string(l), out);
    blend_n2_[l].collect(prefix + ".blend_n2_" + std::to_string(l), out);
    blend_g1_[l].collect(prefix + ".blend_g1_" + std::to_string(l), out);
    blend_g2_[l].collect(prefix + ".blend_g2_" + std::to_string(l), out);
  }
  refine_pred_.collect(prefix + ".refine_pred", out);
  refine_dconv_.collect(prefix + ".refine_dconv", out);
}

// ---------------------------------------------------------------------------
// Non-local attention

NonlocalAttention::NonlocalAttention(int channels, bool two_pass_spatial, Rng& rng)
    : two_pass_(two_pass_spatial) {
  const int reduced = std::max(channels / 2, 1);
  q_ = Conv2dLayer(channels, reduced, 1, 1, 0, InitKind::he_normal, rng);
  k_ = Conv2dLayer(channels, reduced, 1, 1, 0, InitKind::he_normal, rng);
  v_ = Conv2dLayer(channels, channels, 1, 1, 0, InitKind::he_normal, rng);
  out_spatial_ = Conv2dLayer(channels, channels, 1, 1, 0, InitKind::zero, rng);
  out_channel_ = Conv2dLayer(channels, channels, 1, 1, 0, InitKind::zero, rng);
  out_temporal_ = Conv2dLayer(channels, channels, 1, 1, 0, InitKind::zero, rng);
}

Var NonlocalAttention::spatial_pass(Tape& tape, const Var& x) const {
  return criss_cross_attend(tape, q_.forward(tape, x), k_.forward(tape, x),
                            v_.forward(tape, x));
}

Var NonlocalAttention::forward(Tape& tape, const Var& stack) const {
  const int t_n = stack->value.dim(0), c = stack->value.dim(1);
  const int h = stack->value.dim(2), w = stack->value.dim(3);

  Var sp = spatial_pass(tape, stack);
  if (two_pass_) sp = spatial_pass(tape, sp);
  Var spatial_branch = out_spatial_.forward(tape, sp);

  std::vector<Var> per_frame;
  for (int t = 0; t < t_n; ++t) {
    Var slice = slice_batch(tape, stack, t, t + 1);
    Var flat = reshape(tape, slice, {c, h * w});
    Var mixed = gram_softmax_recombine(tape, flat);
    per_frame.push_back(reshape(tape, mixed, {1, c, h, w}));
  }
  Var channel_branch = out_channel_.forward(tape, concat_batch(tape, per_frame));

  Var frames_flat = reshape(tape, stack, {t_n, c * h * w});
  Var temporal_mix = reshape(tape, gram_softmax_recombine(tape, frames_flat), {t_n, c, h, w});
  Var temporal_branch = out_temporal_.forward(tape, temporal_mix);

  Var out = add(tape, stack, spatial_branch);
  out = add(tape, out, channel_branch);
  return add(tape, out, temporal_branch);
}

void NonlocalAttention::collect(const std::string& prefix, std::vector<Param*>& out) {
  q_.collect(prefix + ".q", out);
  k_.collect(prefix + ".k", out);
  v_.collect(prefix + ".v", out);
  out_spatial_.collect(prefix + ".out_spatial", out);
  out_channel_.collect(prefix + ".out_channel", out);
  out_temporal_.collect(prefix + ".out_temporal", out);
}

// ---------------------------------------------------------------------------
// Temporal fusion

TemporalFusion::TemporalFusion(int channels, int frames, Rng& rng)
    : embed_(channels, channels, 3, 1, 1, InitKind::he_normal, rng),
      aggregate_(frames * channels, channels, 1, 1, 0, InitKind::he_normal, rng),
      mask_fine_(channels, channels, 3, 1, 1, InitKind::he_normal, rng),
      mask_coarse_(channels, channels, 3, 1, 1, InitKind::he_normal, rng),
      mask_out_(channels, channels, 3, 1, 1, InitKind::he_normal, rng),
      frames_(frames) {}

Var TemporalFusion::forward(Tape& tape, const Var& stack) const {
  require(stack->value.dim(0) == frames_, ErrorKind::dimension,
          "temporal fusion expects the configured frame count");
  const int center = frames_ / 2;
  Var embedded = embed_.forward(tape, stack);
  Var center_embed = slice_batch(tape, embedded, center, center + 1);

  // Every slice — the center included — is gated by its similarity to the
  // center embedding; the sigmoid keeps weights in (0,1).
  std::vector<Var> weighted;
  for (int t = 0; t < frames_; ++t) {
    Var et = slice_batch(tape, embedded, t, t + 1);
    Var sim = sigmoid(tape, dot_channels(tape, et, center_embed));
    Var xt = slice_batch(tape, stack, t, t + 1);
    weighted.push_back(mul_bcast_spatial(tape, xt, sim));
  }
  Var agg = leaky_relu(tape, aggregate_.forward(tape, concat_channels(tape, weighted)), kSlope);

  // Two-level pyramid spatial attention over the aggregated features.
  Var fine = leaky_relu(tape, mask_fine_.forward(tape, agg), kSlope);
  Var coarse = leaky_relu(tape, mask_coarse_.forward(tape, avg_pool2(tape, fine)), kSlope);
  Var mask = sigmoid(tape, mask_out_.forward(tape, add(tape, fine, upsample2x(tape, coarse))));
  return mul(tape, agg, mask);
}

void TemporalFusion::collect(const std::string& prefix, std::vector<Param*>& out) {
  embed_.collect(prefix + ".embed", out);
  aggregate_.collect(prefix + ".aggregate", out);
  mask_fine_.collect(prefix + ".mask_fine", out);
  mask_coarse_.collect(prefix + ".mask_coarse", out);
  mask_out_.collect(prefix + ".mask_out", out);
}

// ---------------------------------------------------------------------------
// Spatial fusion

SpatialFusion::SpatialFusion(int channels, int blocks, int out_channels, Rng& rng) {
  for (int i = 0; i < blocks; ++i) blocks_.emplace_back(channels, rng);
  const int hidden = std::max(channels / 4, 1);
  mlp1_ = Conv2dLayer(channels, hidden, 1, 1, 0, InitKind::he_normal, rng);
  mlp2_ = Conv2dLayer(hidden, channels, 1, 1, 0, InitKind::he_normal, rng);
  spatial_att_ = Conv2dLayer(2, 1, 7, 1, 3, InitKind::he_normal, rng);
  out_ = Conv2dLayer(channels, out_channels, 3, 1, 1, InitKind::zero, rng);
}

Var SpatialFusion::forward(Tape& tape, const Var& fused, ForwardTrace& trace) const {
  trace.fusion_stage_channels.push_back(fused->value.dim(1));
  Var h = fused;
  for (const ResBlock& block : blocks_) {
    h = block.forward(tape, h);
    trace.fusion_stage_channels.push_back(h->value.dim(1));
  }

  // Channel gate: shared bottleneck over average- and max-pooled statistics.
  Var ga = global_avg_pool(tape, h);
  Var gm = global_max_pool(tape, h);
  Var ba = mlp2_.forward(tape, leaky_relu(tape, mlp1_.forward(tape, ga), kSlope));
  Var bm = mlp2_.forward(tape, leaky_relu(tape, mlp1_.forward(tape, gm), kSlope));
  h = mul_bcast_channel(tape, h, sigmoid(tape, add(tape, ba, bm)));
  trace.fusion_stage_channels.push_back(h->value.dim(1));

  // Spatial gate: 7x7 convolution over pooled channel maps.
  Var pooled = concat_channels(tape, {channel_mean(tape, h), channel_max(tape, h)});
  h = mul_bcast_spatial(tape, h, sigmoid(tape, spatial_att_.forward(tape, pooled)));
  trace.fusion_stage_channels.push_back(h->value.dim(1));

  return out_.forward(tape, h);
}

void SpatialFusion::collect(const std::string& prefix, std::vector<Param*>& out) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
  }
  mlp1_.collect(prefix + ".mlp1", out);
  mlp2_.collect(prefix + ".mlp2", out);
  spatial_att_.collect(prefix + ".spatial_att", out);
  out_.collect(prefix + ".out", out);
}

// ---------------------------------------------------------------------------
// Full model

VideNet::VideNet(const VideNetSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  extractor_ = FeatureExtractor(spec_.stream_in_channels(), spec_.stream_channels(),
                                spec_.pyramid_levels, rng);
  alignment_ = AlignmentModule(spec_.stream_channels(), spec_.pyramid_levels, rng);
  attention_ = NonlocalAttention(spec_.stream_channels(), spec_.two_pass_spatial, rng);
  temporal_ = TemporalFusion(spec_.stream_channels(), spec_.frames, rng);
  spatial_ = SpatialFusion(spec_.fusion_channels(), spec_.fusion_blocks,
                           spec_.output_channels(), rng);
}

ForwardResult VideNet::forward(Tape& tape, const Tensor& noisy_frames,
                               const Tensor& guide_frames, const Tensor& center_reference,
                               BayerPattern pattern) const {
  const int t_n = spec_.frames;
  const int p_n = spec_.stream_count();
  const int frame_ch = spec_.packing ? 4 : spec_.stream_in_channels();
  require(noisy_frames.ndim() == 4 && noisy_frames.dim(0) == t_n &&
              noisy_frames.dim(1) == frame_ch,
          ErrorKind::dimension, "frame stack must be (T, C, H, W) with the configured T and C");
  const int h = noisy_frames.dim(2), w = noisy_frames.dim(3);
  const int div = 1 << (spec_.pyramid_levels - 1);
  require(h % std::max(div, 2) == 0 && w % std::max(div, 2) == 0, ErrorKind::dimension,
          "frame dims must be divisible by " + std::to_string(std::max(div, 2)));

  ForwardResult result;
  ForwardTrace& trace = result.trace;

  // Packed planes of one frame occupy consecutive batch rows, so the packed
  // (T,4,h,w) stack reinterprets as (T*4,1,h,w) without copying.
  const bool guided = spec_.predenoise_guided;
  Var x_n = tape.leaf(noisy_frames.reshaped({t_n * p_n, spec_.stream_in_channels(), h, w}),
                      false, "noisy_input");
  std::vector<Var> pyr_n = extractor_.forward(tape, x_n);
  std::vector<Var> pyr_g = pyr_n;
  if (guided) {
    require(guide_frames.ndim() == 4 && guide_frames.dim(0) == t_n &&
                guide_frames.dim(1) == frame_ch && guide_frames.dim(2) == h &&
                guide_frames.dim(3) == w,
            ErrorKind::dimension, "guide stack must match the noisy stack shape");
    Var x_g = tape.leaf(guide_frames.reshaped({t_n * p_n, spec_.stream_in_channels(), h, w}),
                        false, "denoised_input");
    pyr_g = extractor_.forward(tape, x_g);
  }

  auto frame_slice = [&](const std::vector<Var>& pyr, int t) {
    std::vector<Var> out;
    out.reserve(pyr.size());
    for (const Var& level : pyr) out.push_back(slice_batch(tape, level, t * p_n, (t + 1) * p_n));
    return out;
  };

  const int center = spec_.center_index();
  const std::vector<Var> center_g = frame_slice(pyr_g, center);
  std::vector<Var> frame_feats(static_cast<std::size_t>(t_n));
  for (int t = 0; t < t_n; ++t) {
    if (t == center) {
      frame_feats[static_cast<std::size_t>(t)] = frame_slice(pyr_n, center)[0];
      continue;
    }
    frame_feats[static_cast<std::size_t>(t)] = alignment_.align(
        tape, frame_slice(pyr_n, t), frame_slice(pyr_g, t), center_g, trace);
  }

  std::vector<Var> plane_fused;
  for (int p = 0; p < p_n; ++p) {
    std::vector<Var> slices;
    slices.reserve(static_cast<std::size_t>(t_n));
    for (int t = 0; t < t_n; ++t) {
      slices.push_back(slice_batch(tape, frame_feats[static_cast<std::size_t>(t)], p, p + 1));
    }
    Var stack = concat_batch(tape, slices);
    if (spec_.nonlocal) stack = attention_.forward(tape, stack);
    plane_fused.push_back(temporal_.forward(tape, stack));
  }
  Var fused = p_n > 1 ? concat_channels(tape, plane_fused) : plane_fused[0];

  Var noise = spatial_.forward(tape, fused, trace);
  if (spec_.packing) noise = unpack_op(tape, noise, pattern);
  trace.noise_estimate = noise;

  require(center_reference.ndim() == 4 && noise->value.same_shape(center_reference),
          ErrorKind::dimension, "center reference must match the predicted residual shape");
  result.output = add(tape, noise, tape.leaf(center_reference));
  return result;
}

void VideNet::collect(const std::string& prefix, std::vector<Param*>& out) {
  extractor_.collect(prefix + ".extract", out);
  alignment_.collect(prefix + ".align", out);
  attention_.collect(prefix + ".attention", out);
  temporal_.collect(prefix + ".temporal", out);
  spatial_.collect(prefix + ".fusion", out);
}

}  // namespace rvd
