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

#include "rvdlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>
#include <utility>

#include "rvdlab/image_io.hpp"
#include "rvdlab/ops.hpp"

namespace rvd {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Small local helpers

Tensor clamp01(const Tensor& t) {
  Tensor out = t.clone();
  double* p = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) p[i] = std::clamp(p[i], 0.0, 1.0);
  return out;
}

double scalar(const Var& v) { return v->value.data()[0]; }

// Stack per-frame (C,h,w) tensors into one contiguous (T,C,h,w) tensor.
Tensor stack_frames(const std::vector<Tensor>& frames) {
  require(!frames.empty(), ErrorKind::dimension, "cannot stack an empty frame list");
  const Tensor& f0 = frames.front();
  require(f0.ndim() == 3, ErrorKind::dimension, "stacked frames must be (C,H,W)");
  Tensor out({static_cast<int>(frames.size()), f0.dim(0), f0.dim(1), f0.dim(2)});
  double* dst = out.data();
  for (const Tensor& f : frames) {
    require(f.same_shape(f0), ErrorKind::dimension, "stacked frames must share one shape");
    std::memcpy(dst, f.data(), f.size() * sizeof(double));
    dst += f.size();
  }
  return out;
}

// Even reflection pads growing (h,w) to multiples of `multiple`, with an even
// `margin` of context on every side. Even pads keep the CFA phase intact.
struct PadPlan {
  int top = 0, bottom = 0, left = 0, right = 0;
};

PadPlan plan_even_pad(int h, int w, int multiple, int margin) {
  require(multiple >= 1 && margin >= 0 && margin % 2 == 0, ErrorKind::parameter,
          "pad margin must be even and the grid positive");
  PadPlan p;
  p.top = p.left = margin;
  p.bottom = margin + (multiple - (h + 2 * margin) % multiple) % multiple;
  p.right = margin + (multiple - (w + 2 * margin) % multiple) % multiple;
  return p;
}

// Deep copy of a sequence with cloned frame buffers, normalized to [0,1].
Sequence normalized_clone(const Sequence& seq) {
  Sequence out;
  out.name = seq.name;
  out.meta = seq.meta;
  out.normalized = seq.normalized;
  out.frames.reserve(seq.frames.size());
  for (const Tensor& f : seq.frames) out.frames.push_back(f.clone());
  if (!out.normalized) normalize_sequence(out);
  return out;
}

void check_clean_corpus(const std::vector<Sequence>& clean, int patch, int min_frames) {
  require(!clean.empty(), ErrorKind::insufficient_data, "no clean sequences provided");
  const BayerPattern pattern = clean.front().meta.pattern;
  for (const Sequence& seq : clean) {
    require(seq.normalized, ErrorKind::state, "training sequences must be normalized");
    require(seq.meta.pattern == pattern, ErrorKind::consistency,
            "training sequences disagree on the CFA pattern");
    require(seq.frame_count() >= min_frames, ErrorKind::insufficient_data,
            "sequence " + seq.name + " is shorter than the required temporal span");
    require(seq.height() >= patch && seq.width() >= patch, ErrorKind::dimension,
            "sequence " + seq.name + " is smaller than the training patch");
  }
}

void divide_grads(const std::vector<Param*>& params, double denom) {
  if (denom == 1.0) return;
  const double inv = 1.0 / denom;
  for (Param* p : params) {
    if (!p->grad.defined()) continue;
    double* g = p->grad.data();
    for (std::size_t i = 0; i < p->grad.size(); ++i) g[i] *= inv;
  }
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const std::string& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return std::string(buf);
}

constexpr std::uint64_t kInitStream = 0x1217;       // network initialization
constexpr std::uint64_t kSampleStream = 0x51E9;     // per-step data sampling
constexpr std::uint64_t kEvalNoiseStream = 0xE7A1;  // ablation evaluation noise

}  // namespace

// ---------------------------------------------------------------------------
// Losses

void LossWeights::validate() const {
  require(lambda >= 0.0 && beta >= 0.0 && gamma >= 0.0, ErrorKind::configuration,
          "loss weights must be non-negative");
}

Var compute_loss(Tape& tape, const LossOutputs& outputs, const LossTargets& targets,
                 const LossWeights& weights, LossBreakdown* breakdown) {
  weights.validate();
  require(static_cast<bool>(outputs.raw), ErrorKind::configuration,
          "loss needs the reconstruction output");
  require(targets.raw.defined(), ErrorKind::configuration, "loss needs the clean target");

  Var target_raw = tape.leaf(targets.raw);
  Var rec_raw = l1_loss(tape, outputs.raw, target_raw);
  Var rec = rec_raw;
  double rec_srgb_value = 0.0;
  if (weights.beta > 0.0) {
    require(static_cast<bool>(outputs.srgb) && targets.srgb.defined(), ErrorKind::configuration,
            "rendered-domain weight is set but no rendered output/target was given");
    Var rec_srgb = l1_loss(tape, outputs.srgb, tape.leaf(targets.srgb));
    rec_srgb_value = scalar(rec_srgb);
    rec = add(tape, rec, scale(tape, rec_srgb, weights.beta));
  }

  Var total = rec;
  double tmp_value = 0.0, tmp_pair_value = 0.0, tmp_anchor_value = 0.0;
  if (weights.lambda > 0.0) {
    require(static_cast<bool>(outputs.tmp_first) && static_cast<bool>(outputs.tmp_second),
            ErrorKind::configuration,
            "temporal weight is set but no temporal output pair was given");
    Var pair = l1_loss(tape, outputs.tmp_first, outputs.tmp_second);
    Var anchors = add(tape, l1_loss(tape, outputs.tmp_first, target_raw),
                      l1_loss(tape, outputs.tmp_second, target_raw));
    Var tmp = add(tape, pair, scale(tape, anchors, weights.gamma));
    tmp_pair_value = scalar(pair);
    tmp_anchor_value = scalar(anchors);
    tmp_value = scalar(tmp);
    total = add(tape, total, scale(tape, tmp, weights.lambda));
  }

  if (breakdown) {
    breakdown->rec_raw = scalar(rec_raw);
    breakdown->rec_srgb = rec_srgb_value;
    breakdown->rec = scalar(rec);
    breakdown->tmp = tmp_value;
    breakdown->tmp_pair = tmp_pair_value;
    breakdown->tmp_anchor = tmp_anchor_value;
    breakdown->total = scalar(total);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Configuration

TrainStage parse_stage(const std::string& name) {
  if (name == "predenoise") return TrainStage::predenoise;
  if (name == "isp") return TrainStage::isp;
  if (name == "pretrain_synthetic") return TrainStage::pretrain_synthetic;
  if (name == "finetune_real") return TrainStage::finetune_real;
  throw Error(ErrorKind::configuration, "unknown training stage '" + name + "'");
}

const char* to_string(TrainStage stage) {
  switch (stage) {
    case TrainStage::predenoise: return "predenoise";
    case TrainStage::isp: return "isp";
    case TrainStage::pretrain_synthetic: return "pretrain_synthetic";
    case TrainStage::finetune_real: return "finetune_real";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  require(patch_size >= 8 && patch_size % 2 == 0, ErrorKind::configuration,
          "patch size must be even and at least 8");
  require(batch_size >= 1, ErrorKind::configuration, "batch size must be at least 1");
  require(epochs >= 1, ErrorKind::configuration, "epochs must be at least 1");
  require(steps_per_epoch >= 1, ErrorKind::configuration, "steps per epoch must be at least 1");
  require(lr >= 0.0 && lr_fusion >= 0.0, ErrorKind::configuration,
          "learning rates must be non-negative");
  require(temporal_pairs == "realizations" || temporal_pairs == "consecutive",
          ErrorKind::configuration,
          "temporal_pairs must be 'realizations' or 'consecutive'");
  require(noise.sigma_s_sq >= 0.0 && noise.sigma_r >= 0.0, ErrorKind::configuration,
          "noise parameters must be non-negative");
  arch.validate();
  if (stage == TrainStage::predenoise || stage == TrainStage::isp) {
    // Packed planes must divide the single-frame network grid (depth 4).
    require(patch_size % 32 == 0, ErrorKind::configuration,
            "single-frame stages need the patch divisible by 32");
  } else {
    const int grid = std::max(1 << (arch.pyramid_levels - 1), 2);
    const int mult = arch.packing ? 2 * grid : grid;
    require(patch_size % mult == 0, ErrorKind::configuration,
            "patch size must be divisible by the alignment-pyramid grid of " +
                std::to_string(mult));
  }
  if (stage == TrainStage::finetune_real) {
    require(arch.raw_domain, ErrorKind::configuration,
            "the final training stage operates on raw-domain models");
    // beta > 0 renders outputs through the learned converter in-graph.
    require(patch_size % 32 == 0, ErrorKind::configuration,
            "the final training stage needs the patch divisible by 32");
  }
}

double TrainConfig::effective_lr() const {
  if (lr > 0.0) return lr;
  return stage == TrainStage::finetune_real ? 1e-6 : 1e-4;
}

double TrainConfig::effective_lr_fusion() const {
  if (lr_fusion > 0.0) return lr_fusion;
  return stage == TrainStage::finetune_real ? 1e-5 : effective_lr();
}

LossWeights TrainConfig::stage_weights() const {
  if (stage == TrainStage::finetune_real) return LossWeights{1.0, 0.5, 0.1};
  return LossWeights{0.0, 0.0, 0.0};
}

KvRecords TrainConfig::to_records() const {
  KvRecords r;
  r.emplace_back("stage", to_string(stage));
  r.emplace_back("patch_size", std::to_string(patch_size));
  r.emplace_back("batch_size", std::to_string(batch_size));
  r.emplace_back("lr", format_double(lr));
  r.emplace_back("lr_fusion", format_double(lr_fusion));
  r.emplace_back("epochs", std::to_string(epochs));
  r.emplace_back("steps_per_epoch", std::to_string(steps_per_epoch));
  r.emplace_back("seed", std::to_string(seed));
  r.emplace_back("temporal_pairs", temporal_pairs);
  r.emplace_back("sigma_s_sq", format_double(noise.sigma_s_sq));
  r.emplace_back("sigma_r", format_double(noise.sigma_r));
  KvRecords a = arch.to_records();
  r.insert(r.end(), a.begin(), a.end());
  return r;
}

TrainConfig TrainConfig::from_records(const KvRecords& records) {
  static const std::set<std::string> known = {
      "stage",       "patch_size",      "batch_size",     "lr",
      "lr_fusion",   "epochs",          "steps_per_epoch", "seed",
      "temporal_pairs", "sigma_s_sq",   "sigma_r",
      // architecture switches
      "channels",    "frames",          "pyramid_levels", "fusion_blocks",
      "raw_domain",  "packing",         "predenoise_guided", "nonlocal",
      "two_pass_spatial"};
  for (const auto& kv : records) {
    require(known.count(kv.first) != 0, ErrorKind::configuration,
            "unknown training config key '" + kv.first + "'");
  }
  TrainConfig c;
  std::string v;
  if (find_value(records, "stage", &v)) c.stage = parse_stage(v);
  if (find_value(records, "patch_size", &v)) c.patch_size = static_cast<int>(parse_long(v, "patch_size"));
  if (find_value(records, "batch_size", &v)) c.batch_size = static_cast<int>(parse_long(v, "batch_size"));
  if (find_value(records, "lr", &v)) c.lr = parse_double(v, "lr");
  if (find_value(records, "lr_fusion", &v)) c.lr_fusion = parse_double(v, "lr_fusion");
  if (find_value(records, "epochs", &v)) c.epochs = static_cast<int>(parse_long(v, "epochs"));
  if (find_value(records, "steps_per_epoch", &v))
    c.steps_per_epoch = static_cast<int>(parse_long(v, "steps_per_epoch"));
  if (find_value(records, "seed", &v)) c.seed = static_cast<std::uint64_t>(parse_long(v, "seed"));
  if (find_value(records, "temporal_pairs", &v)) c.temporal_pairs = v;
  if (find_value(records, "sigma_s_sq", &v)) c.noise.sigma_s_sq = parse_double(v, "sigma_s_sq");
  if (find_value(records, "sigma_r", &v)) c.noise.sigma_r = parse_double(v, "sigma_r");
  VideNetSpec defaults;
  bool any_arch = false;
  for (const char* key : {"channels", "frames", "pyramid_levels", "fusion_blocks", "raw_domain",
                          "packing", "predenoise_guided", "nonlocal", "two_pass_spatial"}) {
    if (find_value(records, key, &v)) any_arch = true;
  }
  if (any_arch) {
    // Architecture keys fall back to defaults key-by-key.
    KvRecords merged = defaults.to_records();
    for (auto& kv : merged) {
      if (find_value(records, kv.first, &v)) kv.second = v;
    }
    c.arch = VideNetSpec::from_records(merged);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Frozen single-frame networks applied to whole frames

Tensor predenoise_mosaic(const UNet& net, const Tensor& mosaic, BayerPattern pattern) {
  require(mosaic.ndim() == 2, ErrorKind::dimension, "expected a single (H,W) mosaic");
  const int h = mosaic.dim(0), w = mosaic.dim(1);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::dimension, "mosaic dims must be even");
  require(net.spec().in_channels == 4 && net.spec().out_channels == 4 && net.spec().upscale == 1,
          ErrorKind::configuration, "network is not a plane-to-plane denoiser");
  const int mult = 2 * (1 << net.spec().depth);
  const PadPlan p = plan_even_pad(h, w, mult, 0);
  const Tensor padded = reflect_pad_hw(mosaic, p.top, p.bottom, p.left, p.right);
  const Tensor planes = pack_planes(padded, pattern);
  Tape tape;
  Var x = tape.leaf(planes.reshaped({1, 4, planes.dim(1), planes.dim(2)}));
  Var y = net.forward(tape, x);
  const Tensor out = unpack_planes(y->value.reshaped({4, planes.dim(1), planes.dim(2)}), pattern);
  return crop_hw(out, p.top, p.left, h, w);
}

Tensor learned_isp_mosaic(const UNet& net, const Tensor& mosaic, BayerPattern pattern) {
  require(mosaic.ndim() == 2, ErrorKind::dimension, "expected a single (H,W) mosaic");
  const int h = mosaic.dim(0), w = mosaic.dim(1);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::dimension, "mosaic dims must be even");
  require(net.spec().in_channels == 4 && net.spec().out_channels == 3 && net.spec().upscale == 2,
          ErrorKind::configuration, "network is not a raw-to-sRGB converter");
  const int mult = 2 * (1 << net.spec().depth);
  const PadPlan p = plan_even_pad(h, w, mult, 0);
  const Tensor padded = reflect_pad_hw(mosaic, p.top, p.bottom, p.left, p.right);
  const Tensor planes = pack_planes(padded, pattern);
  Tape tape;
  Var x = tape.leaf(planes.reshaped({1, 4, planes.dim(1), planes.dim(2)}));
  Var y = net.forward(tape, x);
  const Tensor srgb = y->value.reshaped({3, padded.dim(0), padded.dim(1)});
  return clamp01(crop_hw(srgb, p.top, p.left, h, w));
}

// ---------------------------------------------------------------------------
// Whole-window inference

WindowResult denoise_window(const ModelBundle& bundle, const std::vector<Tensor>& frames,
                            BayerPattern pattern) {
  require(bundle.net != nullptr, ErrorKind::dependency, "model bundle holds no denoiser");
  const VideNetSpec& spec = bundle.net->spec();
  const int t_n = spec.frames;
  require(static_cast<int>(frames.size()) == t_n, ErrorKind::dimension,
          "window must hold exactly the temporal span");
  if (spec.predenoise_guided) {
    require(bundle.predenoiser != nullptr, ErrorKind::dependency,
            "guided alignment needs the single-frame pre-denoiser");
  }
  const int grid = std::max(1 << (spec.pyramid_levels - 1), 2);

  if (spec.raw_domain) {
    const Tensor& f0 = frames.front();
    require(f0.ndim() == 2, ErrorKind::dimension, "raw-domain windows hold (H,W) mosaics");
    const int h = f0.dim(0), w = f0.dim(1);
    require(h % 2 == 0 && w % 2 == 0, ErrorKind::dimension, "mosaic dims must be even");
    int mult = spec.packing ? 2 * grid : grid;
    if (mult % 2 != 0) mult *= 2;  // keep pads even so the CFA phase survives
    const int margin = 8;
    const PadPlan p = plan_even_pad(h, w, mult, margin);

    std::vector<Tensor> padded, guides;
    padded.reserve(frames.size());
    for (const Tensor& f : frames) {
      require(f.same_shape(f0), ErrorKind::dimension, "window frames must share one shape");
      padded.push_back(reflect_pad_hw(f, p.top, p.bottom, p.left, p.right));
    }
    if (spec.predenoise_guided) {
      guides.reserve(padded.size());
      for (const Tensor& f : padded) {
        guides.push_back(predenoise_mosaic(*bundle.predenoiser, f, pattern));
      }
    }
    const int hp = h + p.top + p.bottom, wp = w + p.left + p.right;

    Tensor noisy_stack, guide_stack, center_ref;
    if (spec.packing) {
      std::vector<Tensor> np, gp;
      for (const Tensor& f : padded) np.push_back(pack_planes(f, pattern));
      noisy_stack = stack_frames(np);
      if (spec.predenoise_guided) {
        for (const Tensor& f : guides) gp.push_back(pack_planes(f, pattern));
        guide_stack = stack_frames(gp);
      } else {
        guide_stack = noisy_stack;
      }
    } else {
      std::vector<Tensor> np, gp;
      for (const Tensor& f : padded) np.push_back(f.reshaped({1, hp, wp}));
      noisy_stack = stack_frames(np);
      if (spec.predenoise_guided) {
        for (const Tensor& f : guides) gp.push_back(f.reshaped({1, hp, wp}));
        guide_stack = stack_frames(gp);
      } else {
        guide_stack = noisy_stack;
      }
    }
    center_ref = padded[static_cast<std::size_t>(spec.center_index())].reshaped({1, 1, hp, wp});

    Tape tape;
    ForwardResult res = bundle.net->forward(tape, noisy_stack, guide_stack, center_ref, pattern);
    WindowResult out;
    out.output = crop_hw(res.output->value.reshaped({hp, wp}), p.top, p.left, h, w);
    out.trace = std::move(res.trace);
    return out;
  }

  // Rendered-domain path: frames are (3,H,W) images.
  const Tensor& f0 = frames.front();
  require(f0.ndim() == 3 && f0.dim(0) == 3, ErrorKind::dimension,
          "rendered-domain windows hold (3,H,W) frames");
  const int h = f0.dim(1), w = f0.dim(2);
  int mult = grid;
  if (mult % 2 != 0) mult *= 2;
  const int margin = 8;
  const PadPlan p = plan_even_pad(h, w, mult, margin);
  std::vector<Tensor> padded;
  for (const Tensor& f : frames) {
    require(f.same_shape(f0), ErrorKind::dimension, "window frames must share one shape");
    padded.push_back(reflect_pad_hw(f, p.top, p.bottom, p.left, p.right));
  }
  const int hp = h + p.top + p.bottom, wp = w + p.left + p.right;
  Tensor noisy_stack = stack_frames(padded);
  Tensor center_ref =
      padded[static_cast<std::size_t>(spec.center_index())].reshaped({1, 3, hp, wp});
  Tape tape;
  ForwardResult res = bundle.net->forward(tape, noisy_stack, noisy_stack, center_ref, pattern);
  WindowResult out;
  out.output = crop_hw(res.output->value.reshaped({3, hp, wp}), p.top, p.left, h, w);
  out.trace = std::move(res.trace);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint helpers

void save_unet(const std::string& path, UNet& net, const std::string& role,
               const KvRecords& extra) {
  KvRecords meta;
  meta.emplace_back("model", "unet");
  meta.emplace_back("role", role);
  KvRecords s = net.spec().to_records();
  meta.insert(meta.end(), s.begin(), s.end());
  meta.insert(meta.end(), extra.begin(), extra.end());
  auto params = net.parameters("unet");
  save_checkpoint(path, meta, params);
}

std::unique_ptr<UNet> load_unet(const std::string& path, const std::string& expected_role) {
  const KvRecords meta = read_checkpoint_meta(path);
  require(require_value(meta, "model", path) == "unet", ErrorKind::consistency,
          "checkpoint does not hold a single-frame network: " + path);
  const std::string role = require_value(meta, "role", path);
  require(role == expected_role, ErrorKind::consistency,
          "checkpoint role is '" + role + "', expected '" + expected_role + "': " + path);
  UNetSpec spec = UNetSpec::from_records(meta);
  Rng rng(0);
  auto net = std::make_unique<UNet>(spec, rng);
  auto params = net->parameters("unet");
  load_checkpoint(path, params);
  return net;
}

void save_videnet(const std::string& path, VideNet& net, const KvRecords& extra) {
  KvRecords meta;
  meta.emplace_back("model", "videnet");
  KvRecords s = net.spec().to_records();
  meta.insert(meta.end(), s.begin(), s.end());
  meta.insert(meta.end(), extra.begin(), extra.end());
  auto params = net.parameters("model");
  save_checkpoint(path, meta, params);
}

std::unique_ptr<VideNet> load_videnet(const std::string& path, VideNetSpec* spec_out) {
  const KvRecords meta = read_checkpoint_meta(path);
  require(require_value(meta, "model", path) == "videnet", ErrorKind::consistency,
          "checkpoint does not hold a multi-frame denoiser: " + path);
  VideNetSpec spec = VideNetSpec::from_records(meta);
  Rng rng(0);
  auto net = std::make_unique<VideNet>(spec, rng);
  auto params = net->parameters("model");
  load_checkpoint(path, params);
  if (spec_out) *spec_out = spec;
  return net;
}

// ---------------------------------------------------------------------------
// Single-frame training stages

TrainResult train_unet_stage(const TrainConfig& config, const std::vector<Sequence>& clean,
                             const IspConfig& reference, const std::string& out_dir,
                             UNet* trained_out) {
  config.validate();
  require(config.stage == TrainStage::predenoise || config.stage == TrainStage::isp,
          ErrorKind::configuration,
          "the single-frame trainer handles the predenoise and isp stages only");
  check_clean_corpus(clean, config.patch_size, 1);
  validate_isp_config(reference);
  fs::create_directories(out_dir);

  const BayerPattern pattern = clean.front().meta.pattern;
  const bool is_isp = config.stage == TrainStage::isp;
  const std::string role = is_isp ? "learned_isp" : "predenoiser";
  const int s = config.patch_size;

  UNetSpec spec;
  spec.in_channels = 4;
  spec.out_channels = is_isp ? 3 : 4;
  spec.depth = 4;
  spec.base_channels = 32;
  spec.max_channels = 256;
  spec.residual = !is_isp;
  spec.upscale = is_isp ? 2 : 1;
  spec.validate();

  Rng init_rng(mix_seed(config.seed, kInitStream));
  UNet net(spec, init_rng);
  auto params = net.parameters("unet");
  Adam opt(params, config.effective_lr());

  TrainResult result;
  long long gstep = 0;
  double last_loss = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int step = 0; step < config.steps_per_epoch; ++step) {
      opt.zero_grad();
      double batch_loss = 0.0;
      for (int b = 0; b < config.batch_size; ++b) {
        Rng srng = Rng(config.seed).substream(
            mix_seed(kSampleStream, static_cast<std::uint64_t>(gstep) *
                                            static_cast<std::uint64_t>(config.batch_size) +
                                        static_cast<std::uint64_t>(b)));
        const Sequence& seq =
            clean[static_cast<std::size_t>(srng.uniform_int(0, static_cast<int>(clean.size()) - 1))];
        const Tensor& frame =
            seq.frames[static_cast<std::size_t>(srng.uniform_int(0, seq.frame_count() - 1))];
        const PatchPos pos = sample_patch_pos(srng, seq.height(), seq.width(), s);
        const Tensor clean_patch = crop_hw(frame, pos.y0, pos.x0, s, s);

        Tensor input_planes, target;
        if (is_isp) {
          input_planes = pack_planes(clean_patch, pattern);
          target = isp_forward(clean_patch, pattern, reference).reshaped({1, 3, s, s});
        } else {
          const Tensor noisy = sample_noise(clean_patch, config.noise, srng);
          input_planes = pack_planes(noisy, pattern);
          target = pack_planes(clean_patch, pattern).reshaped({1, 4, s / 2, s / 2});
        }

        Tape tape;
        Var x = tape.leaf(input_planes.reshaped({1, 4, s / 2, s / 2}));
        Var y = net.forward(tape, x);
        Var loss = l1_loss(tape, y, tape.leaf(target));
        tape.backward(loss);
        batch_loss += scalar(loss);
      }
      divide_grads(params, static_cast<double>(config.batch_size));
      opt.step();
      last_loss = batch_loss / config.batch_size;
      ++gstep;
      result.log_lines.push_back(fmt("step=%lld epoch=%d stage=%s loss=%.8f lr=%g", gstep,
                                     epoch + 1, to_string(config.stage), last_loss,
                                     opt.lr_for("unet")));
    }
    KvRecords meta;
    meta.emplace_back("model", "unet");
    meta.emplace_back("role", role);
    KvRecords sr = spec.to_records();
    meta.insert(meta.end(), sr.begin(), sr.end());
    meta.emplace_back("stage", to_string(config.stage));
    meta.emplace_back("epoch", std::to_string(epoch + 1));
    save_checkpoint((fs::path(out_dir) / (role + "_epoch" + std::to_string(epoch + 1) + ".ckpt"))
                        .string(),
                    meta, params, opt.step_count());
  }

  const std::string final_path = (fs::path(out_dir) / (role + ".ckpt")).string();
  KvRecords extra;
  extra.emplace_back("stage", to_string(config.stage));
  save_unet(final_path, net, role, extra);
  write_text_file((fs::path(out_dir) / "train.log").string(), join_lines(result.log_lines));

  result.final_loss = last_loss;
  result.final_checkpoint = final_path;
  result.steps_run = gstep;
  if (trained_out) *trained_out = net;
  return result;
}

// ---------------------------------------------------------------------------
// Multi-frame training stages

namespace {

struct WindowInputs {
  Tensor noisy;       // (T, C, h, w) network input
  Tensor guide;       // same shape
  Tensor center_ref;  // (1, C_out, H, W)
};

// Assemble network inputs for one window of noisy mosaics (raw domain) or
// rendered frames (otherwise). `guides` holds pre-denoised mosaics when
// guidance is on (ignored otherwise).
WindowInputs make_window_inputs(const VideNetSpec& spec, const std::vector<Tensor>& noisy,
                                const std::vector<Tensor>& guides, BayerPattern pattern) {
  WindowInputs in;
  const int t_n = spec.frames;
  const int center = spec.center_index();
  if (spec.raw_domain) {
    const int h = noisy.front().dim(0), w = noisy.front().dim(1);
    std::vector<Tensor> np, gp;
    for (int i = 0; i < t_n; ++i) {
      const Tensor& m = noisy[static_cast<std::size_t>(i)];
      np.push_back(spec.packing ? pack_planes(m, pattern) : m.reshaped({1, h, w}));
    }
    in.noisy = stack_frames(np);
    if (spec.predenoise_guided) {
      for (int i = 0; i < t_n; ++i) {
        const Tensor& g = guides[static_cast<std::size_t>(i)];
        gp.push_back(spec.packing ? pack_planes(g, pattern) : g.reshaped({1, h, w}));
      }
      in.guide = stack_frames(gp);
    } else {
      in.guide = in.noisy;
    }
    in.center_ref = noisy[static_cast<std::size_t>(center)].reshaped({1, 1, h, w});
  } else {
    in.noisy = stack_frames(noisy);
    in.guide = in.noisy;
    const Tensor& c = noisy[static_cast<std::size_t>(center)];
    in.center_ref = c.reshaped({1, 3, c.dim(1), c.dim(2)});
  }
  return in;
}

}  // namespace

TrainResult train_videnet_stage(const TrainConfig& config, ModelBundle& bundle,
                                const std::vector<Sequence>& clean,
                                const std::string& out_dir) {
  config.validate();
  require(config.stage == TrainStage::pretrain_synthetic ||
              config.stage == TrainStage::finetune_real,
          ErrorKind::configuration,
          "the multi-frame trainer handles the pretrain and finetune stages only");
  require(bundle.net != nullptr, ErrorKind::dependency, "model bundle holds no denoiser");
  const VideNetSpec spec = bundle.net->spec();
  const LossWeights weights = config.stage_weights();
  if (spec.predenoise_guided) {
    require(bundle.predenoiser != nullptr, ErrorKind::dependency,
            "this stage needs the frozen single-frame pre-denoiser");
  }
  if (weights.beta > 0.0) {
    require(bundle.isp != nullptr, ErrorKind::dependency,
            "this stage needs the frozen raw-to-sRGB converter");
  }
  const bool temporal = weights.lambda > 0.0;
  const bool consecutive = temporal && config.temporal_pairs == "consecutive";
  const int t_n = spec.frames;
  const int n_half = t_n / 2;
  const int s = config.patch_size;
  check_clean_corpus(clean, s, t_n + (consecutive ? 1 : 0));
  fs::create_directories(out_dir);
  const BayerPattern pattern = clean.front().meta.pattern;

  // Freeze the single-frame networks and checksum them so any accidental
  // update is caught at the end of the stage.
  std::uint64_t pre_sum = 0, isp_sum = 0;
  if (bundle.predenoiser) {
    bundle.predenoiser->set_frozen(true);
    pre_sum = params_checksum(bundle.predenoiser->parameters("unet"));
  }
  if (bundle.isp) {
    bundle.isp->set_frozen(true);
    isp_sum = params_checksum(bundle.isp->parameters("unet"));
  }

  auto params = bundle.net->parameters("model");
  Adam opt(params, config.effective_lr());
  opt.add_lr_override("model.fusion", config.effective_lr_fusion());

  TrainResult result;
  long long gstep = 0;
  double last_loss = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int step = 0; step < config.steps_per_epoch; ++step) {
      opt.zero_grad();
      double batch_loss = 0.0;
      LossBreakdown bd{};
      for (int b = 0; b < config.batch_size; ++b) {
        Rng srng = Rng(config.seed).substream(
            mix_seed(kSampleStream, static_cast<std::uint64_t>(gstep) *
                                            static_cast<std::uint64_t>(config.batch_size) +
                                        static_cast<std::uint64_t>(b)));
        const Sequence& seq =
            clean[static_cast<std::size_t>(srng.uniform_int(0, static_cast<int>(clean.size()) - 1))];
        const int last_center = seq.frame_count() - 1 - n_half - (consecutive ? 1 : 0);
        const int tc = srng.uniform_int(n_half, last_center);
        const PatchPos pos = sample_patch_pos(srng, seq.height(), seq.width(), s);

        // Clean crops covering every frame the step touches.
        const int span = t_n + (consecutive ? 1 : 0);
        std::vector<Tensor> clean_crop(static_cast<std::size_t>(span));
        for (int i = 0; i < span; ++i) {
          clean_crop[static_cast<std::size_t>(i)] =
              crop_hw(seq.frames[static_cast<std::size_t>(tc - n_half + i)], pos.y0, pos.x0, s, s);
        }
        const Tensor& clean_center = clean_crop[static_cast<std::size_t>(n_half)];

        // Noise realizations. Window A always covers clean frames [0, T);
        // window B either re-noises the same frames (realizations) or slides
        // one frame forward sharing A's draws (consecutive).
        std::vector<Tensor> noisy_a(static_cast<std::size_t>(t_n));
        for (int i = 0; i < t_n; ++i) {
          noisy_a[static_cast<std::size_t>(i)] =
              sample_noise(clean_crop[static_cast<std::size_t>(i)], config.noise, srng);
        }
        std::vector<Tensor> noisy_b;
        if (temporal) {
          noisy_b.resize(static_cast<std::size_t>(t_n));
          if (consecutive) {
            for (int i = 0; i < t_n - 1; ++i) {
              noisy_b[static_cast<std::size_t>(i)] = noisy_a[static_cast<std::size_t>(i + 1)];
            }
            noisy_b[static_cast<std::size_t>(t_n - 1)] =
                sample_noise(clean_crop[static_cast<std::size_t>(t_n)], config.noise, srng);
          } else {
            for (int i = 0; i < t_n; ++i) {
              noisy_b[static_cast<std::size_t>(i)] =
                  sample_noise(clean_crop[static_cast<std::size_t>(i)], config.noise, srng);
            }
          }
        }

        // Domain conversion + guides.
        auto prepare = [&](const std::vector<Tensor>& mosaics) {
          std::vector<Tensor> frames = mosaics, guides;
          if (!spec.raw_domain) {
            frames.clear();
            for (const Tensor& m : mosaics) {
              frames.push_back(isp_forward(clamp01(m), pattern, bundle.reference));
            }
          } else if (spec.predenoise_guided) {
            for (const Tensor& m : mosaics) {
              guides.push_back(predenoise_mosaic(*bundle.predenoiser, m, pattern));
            }
          }
          return make_window_inputs(spec, frames, guides, pattern);
        };

        const WindowInputs in_a = prepare(noisy_a);
        Tape tape;
        ForwardResult res_a =
            bundle.net->forward(tape, in_a.noisy, in_a.guide, in_a.center_ref, pattern);

        LossOutputs outputs;
        outputs.raw = res_a.output;
        LossTargets targets;
        targets.raw = spec.raw_domain
                          ? clean_center.reshaped({1, 1, s, s})
                          : isp_forward(clean_center, pattern, bundle.reference)
                                .reshaped({1, 3, s, s});
        if (weights.beta > 0.0) {
          // Render the prediction through the frozen converter in-graph so
          // the reconstruction gradient reaches the denoiser via both paths.
          Var planes = pack_op(tape, res_a.output, pattern);
          outputs.srgb = bundle.isp->forward(tape, planes);
          targets.srgb =
              learned_isp_mosaic(*bundle.isp, clean_center, pattern).reshaped({1, 3, s, s});
        }
        if (temporal) {
          const WindowInputs in_b = prepare(noisy_b);
          ForwardResult res_b =
              bundle.net->forward(tape, in_b.noisy, in_b.guide, in_b.center_ref, pattern);
          outputs.tmp_first = res_a.output;
          outputs.tmp_second = res_b.output;
        }

        Var loss = compute_loss(tape, outputs, targets, weights, &bd);
        tape.backward(loss);
        batch_loss += scalar(loss);
      }
      divide_grads(params, static_cast<double>(config.batch_size));
      opt.step();
      last_loss = batch_loss / config.batch_size;
      ++gstep;
      result.log_lines.push_back(
          fmt("step=%lld epoch=%d stage=%s loss=%.8f rec=%.8f rec_raw=%.8f rec_srgb=%.8f "
              "tmp=%.8f lambda=%g beta=%g gamma=%g lr=%g lr_fusion=%g",
              gstep, epoch + 1, to_string(config.stage), last_loss, bd.rec, bd.rec_raw,
              bd.rec_srgb, bd.tmp, weights.lambda, weights.beta, weights.gamma,
              config.effective_lr(), config.effective_lr_fusion()));
    }
    KvRecords meta;
    meta.emplace_back("model", "videnet");
    KvRecords sr = spec.to_records();
    meta.insert(meta.end(), sr.begin(), sr.end());
    meta.emplace_back("stage", to_string(config.stage));
    meta.emplace_back("epoch", std::to_string(epoch + 1));
    save_checkpoint(
        (fs::path(out_dir) / ("model_epoch" + std::to_string(epoch + 1) + ".ckpt")).string(),
        meta, params, opt.step_count());
  }

  if (bundle.predenoiser) {
    require(pre_sum == params_checksum(bundle.predenoiser->parameters("unet")),
            ErrorKind::consistency, "frozen pre-denoiser parameters moved during training");
  }
  if (bundle.isp) {
    require(isp_sum == params_checksum(bundle.isp->parameters("unet")), ErrorKind::consistency,
            "frozen converter parameters moved during training");
  }

  const std::string final_path = (fs::path(out_dir) / "model.ckpt").string();
  KvRecords extra;
  extra.emplace_back("stage", to_string(config.stage));
  save_videnet(final_path, *bundle.net, extra);
  write_text_file((fs::path(out_dir) / "train.log").string(), join_lines(result.log_lines));

  result.final_loss = last_loss;
  result.final_checkpoint = final_path;
  result.steps_run = gstep;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate_sequence(const ModelBundle& bundle, const Sequence& noisy,
                             const Sequence* clean, const std::string& out_dir) {
  require(bundle.net != nullptr, ErrorKind::dependency, "model bundle holds no denoiser");
  const VideNetSpec& spec = bundle.net->spec();
  const int t_n = spec.frames;
  const int n_half = t_n / 2;

  const Sequence seq = normalized_clone(noisy);
  require(seq.frame_count() >= t_n, ErrorKind::insufficient_data,
          "sequence is shorter than the temporal window");
  const BayerPattern pattern = seq.meta.pattern;

  Sequence clean_seq;
  const bool scored = clean != nullptr;
  if (scored) {
    clean_seq = normalized_clone(*clean);
    require(clean_seq.frame_count() == seq.frame_count(), ErrorKind::consistency,
            "clean and noisy sequences have different lengths");
    require(clean_seq.height() == seq.height() && clean_seq.width() == seq.width(),
            ErrorKind::consistency, "clean and noisy sequences have different sizes");
    require(clean_seq.meta.pattern == pattern, ErrorKind::consistency,
            "clean and noisy sequences disagree on the CFA pattern");
  }

  // Rendering used for the sRGB-domain scores and outputs: the learned
  // converter when the bundle carries one, else the fixed reference pipeline.
  auto render = [&](const Tensor& mosaic) {
    if (bundle.isp) return learned_isp_mosaic(*bundle.isp, mosaic, pattern);
    return isp_forward(clamp01(mosaic), pattern, bundle.reference);
  };

  EvalResult result;
  result.has_metrics = scored;
  std::vector<Tensor> out_raw, out_srgb;
  for (int tc = n_half; tc + n_half < seq.frame_count(); ++tc) {
    std::vector<Tensor> window;
    for (int i = tc - n_half; i <= tc + n_half; ++i) {
      const Tensor& m = seq.frames[static_cast<std::size_t>(i)];
      window.push_back(spec.raw_domain ? m
                                       : isp_forward(clamp01(m), pattern, bundle.reference));
    }
    const WindowResult wr = denoise_window(bundle, window, pattern);

    FrameScore score;
    score.index = tc;
    if (spec.raw_domain) {
      const Tensor srgb = render(wr.output);
      if (scored) {
        const Tensor& gt = clean_seq.frames[static_cast<std::size_t>(tc)];
        score.raw = score_pair(wr.output, gt);
        score.srgb = score_pair(srgb, render(gt));
      }
      out_raw.push_back(wr.output);
      out_srgb.push_back(srgb);
    } else {
      if (scored) {
        const Tensor gt =
            isp_forward(clean_seq.frames[static_cast<std::size_t>(tc)], pattern, bundle.reference);
        score.srgb = score_pair(wr.output, gt);
      }
      out_srgb.push_back(clamp01(wr.output));
    }
    if (scored) result.frames.push_back(score);
  }

  if (scored && !result.frames.empty()) {
    for (const FrameScore& f : result.frames) {
      result.mean_raw.psnr += f.raw.psnr;
      result.mean_raw.ssim += f.raw.ssim;
      result.mean_srgb.psnr += f.srgb.psnr;
      result.mean_srgb.ssim += f.srgb.ssim;
    }
    const double inv = 1.0 / static_cast<double>(result.frames.size());
    result.mean_raw.psnr *= inv;
    result.mean_raw.ssim *= inv;
    result.mean_srgb.psnr *= inv;
    result.mean_srgb.ssim *= inv;
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    if (!out_raw.empty()) {
      Sequence denoised;
      denoised.name = "denoised";
      denoised.meta = seq.meta;
      denoised.meta.role = "denoised";
      denoised.frames = out_raw;
      denoised.normalized = true;
      save_sequence((fs::path(out_dir) / "raw").string(), denoised);
    }
    const fs::path srgb_dir = fs::path(out_dir) / "srgb";
    fs::create_directories(srgb_dir);
    for (std::size_t i = 0; i < out_srgb.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%07d.ppm", static_cast<int>(i));
      write_ppm((srgb_dir / name).string(), tensor_to_rgb(out_srgb[i], 255));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ablation ladder

std::vector<AblationRow> ablation_ladder(const VideNetSpec& base) {
  struct Flags {
    bool raw, pack, pre, nl;
  };
  static constexpr Flags kLadder[5] = {
      {false, false, false, false},  // rendered-domain baseline
      {true, false, false, false},   // raw domain
      {true, true, false, false},    // + plane packing
      {true, true, true, false},     // + pre-denoised guidance
      {true, true, true, true},      // + non-local attention
  };
  std::vector<AblationRow> rows;
  for (int i = 0; i < 5; ++i) {
    AblationRow row;
    row.row = i + 1;
    row.arch = base;
    row.arch.raw_domain = kLadder[i].raw;
    row.arch.packing = kLadder[i].pack;
    row.arch.predenoise_guided = kLadder[i].pre;
    row.arch.nonlocal = kLadder[i].nl;
    row.arch.validate();
    row.has_raw_metrics = kLadder[i].raw;
    rows.push_back(row);
  }
  return rows;
}

AblationReport run_ablation(const TrainConfig& base, const std::vector<Sequence>& clean_train,
                            const Sequence& clean_eval, const std::string& out_dir) {
  TrainConfig cfg = base;
  cfg.stage = TrainStage::pretrain_synthetic;
  cfg.validate();
  fs::create_directories(out_dir);
  const IspConfig reference{};

  // Shared single-frame networks, trained once and reused by every row that
  // needs them.
  TrainConfig pre_cfg = cfg;
  pre_cfg.stage = TrainStage::predenoise;
  pre_cfg.patch_size = std::max(32, (cfg.patch_size / 32) * 32);
  UNet pre_net;
  train_unet_stage(pre_cfg, clean_train, reference,
                   (fs::path(out_dir) / "predenoiser").string(), &pre_net);
  TrainConfig isp_cfg = pre_cfg;
  isp_cfg.stage = TrainStage::isp;
  UNet isp_net;
  train_unet_stage(isp_cfg, clean_train, reference,
                   (fs::path(out_dir) / "learned_isp").string(), &isp_net);

  const Sequence eval_clean = normalized_clone(clean_eval);
  const Sequence eval_noisy =
      synthesize_noisy_sequence(eval_clean, cfg.noise, mix_seed(cfg.seed, kEvalNoiseStream));

  AblationReport report;
  report.rows = ablation_ladder(cfg.arch);
  std::vector<std::string> lines;
  for (AblationRow& row : report.rows) {
    TrainConfig row_cfg = cfg;
    row_cfg.arch = row.arch;
    row_cfg.validate();

    ModelBundle bundle;
    bundle.spec = row.arch;
    Rng rng(mix_seed(cfg.seed, kInitStream + static_cast<std::uint64_t>(row.row)));
    bundle.net = std::make_unique<VideNet>(row.arch, rng);
    bundle.predenoiser = std::make_unique<UNet>(pre_net);
    bundle.isp = std::make_unique<UNet>(isp_net);
    bundle.reference = reference;

    const std::string row_dir = (fs::path(out_dir) / ("row" + std::to_string(row.row))).string();
    train_videnet_stage(row_cfg, bundle, clean_train, row_dir);
    const EvalResult er =
        evaluate_sequence(bundle, eval_noisy, &eval_clean, row_dir + "/eval");
    row.raw = er.mean_raw;
    row.srgb = er.mean_srgb;

    std::ostringstream line;
    line << "row=" << row.row << " raw_domain=" << (row.arch.raw_domain ? 1 : 0)
         << " packing=" << (row.arch.packing ? 1 : 0)
         << " predenoise=" << (row.arch.predenoise_guided ? 1 : 0)
         << " nonlocal=" << (row.arch.nonlocal ? 1 : 0);
    if (row.has_raw_metrics) {
      line << " psnr_raw=" << fmt("%.4f", row.raw.psnr) << " ssim_raw="
           << fmt("%.5f", row.raw.ssim);
    } else {
      line << " psnr_raw=- ssim_raw=-";
    }
    line << " psnr_srgb=" << fmt("%.4f", row.srgb.psnr) << " ssim_srgb="
         << fmt("%.5f", row.srgb.ssim);
    lines.push_back(line.str());
  }
  report.table_text = join_lines(lines);
  write_text_file((fs::path(out_dir) / "ablation.txt").string(), report.table_text);
  return report;
}

}  // namespace rvd
