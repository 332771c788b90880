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

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rvdlab/dataset.hpp"
#include "rvdlab/metrics.hpp"
#include "rvdlab/noise.hpp"
#include "rvdlab/unet.hpp"
#include "rvdlab/videnet.hpp"

namespace rvd {

// ---------------------------------------------------------------------------
// Losses

struct LossWeights {
  double lambda = 0.0;  // temporal-consistency weight
  double beta = 0.0;    // sRGB reconstruction weight
  double gamma = 0.0;   // clean-anchor weight inside the temporal term

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double rec = 0.0;        // raw + beta * sRGB
  double rec_raw = 0.0;
  double rec_srgb = 0.0;   // unweighted sRGB L1
  double tmp = 0.0;        // pair + gamma * anchors
  double tmp_pair = 0.0;
  double tmp_anchor = 0.0; // sum of both unweighted anchor terms
};

struct LossOutputs {
  Var raw;        // denoised output in the training domain
  Var srgb;       // rendered output; required iff beta > 0
  Var tmp_first;  // temporal-pair outputs; required iff lambda > 0
  Var tmp_second;
};

struct LossTargets {
  Tensor raw;   // clean frame in the training domain
  Tensor srgb;  // clean rendering; required iff beta > 0
};

// total = mean|raw - I| + beta * mean|srgb - Isrgb|
//       + lambda * ( mean|O1 - O2| + gamma * (mean|O1 - I| + mean|O2 - I|) ).
// The temporal terms compare raw-domain outputs only.
Var compute_loss(Tape& tape, const LossOutputs& outputs, const LossTargets& targets,
                 const LossWeights& weights, LossBreakdown* breakdown);

// ---------------------------------------------------------------------------
// Configuration

enum class TrainStage { predenoise, isp, pretrain_synthetic, finetune_real };

TrainStage parse_stage(const std::string& name);
const char* to_string(TrainStage stage);

struct TrainConfig {
  TrainStage stage = TrainStage::pretrain_synthetic;
  int patch_size = 64;  // full-resolution (mosaic) pixels, even
  int batch_size = 1;
  double lr = 0.0;          // 0 -> stage default (1e-4 pretrain/predenoise/isp, 1e-6 finetune)
  double lr_fusion = 0.0;   // 0 -> stage default (1e-5 at finetune, else lr)
  int epochs = 1;
  int steps_per_epoch = 64;
  std::uint64_t seed = 1;
  std::string temporal_pairs = "realizations";  // or "consecutive"
  NoiseParams noise{0.01, 0.02};
  VideNetSpec arch;  // ablation switches live here

  void validate() const;
  double effective_lr() const;
  double effective_lr_fusion() const;
  LossWeights stage_weights() const;
  KvRecords to_records() const;
  static TrainConfig from_records(const KvRecords& records);
};

// ---------------------------------------------------------------------------
// Frozen single-frame networks applied to whole frames

// Pads a normalized mosaic so the packed planes divide the network's grid,
// runs pack -> network -> unpack, crops back. Identity-at-initialization for
// a residual network.
Tensor predenoise_mosaic(const UNet& net, const Tensor& mosaic, BayerPattern pattern);

// Packed raw -> sRGB at full resolution, clamped to [0,1]: (3, H, W).
Tensor learned_isp_mosaic(const UNet& net, const Tensor& mosaic, BayerPattern pattern);

// ---------------------------------------------------------------------------
// Model bundle: everything needed to run the full pipeline.

struct ModelBundle {
  VideNetSpec spec;
  std::unique_ptr<VideNet> net;
  std::unique_ptr<UNet> predenoiser;  // consulted iff spec.predenoise_guided
  std::unique_ptr<UNet> isp;          // raw -> sRGB rendering of outputs
  IspConfig reference;                // fixed pipeline (sRGB-domain mode and data synthesis)
};

// Denoise one temporal window (frames must hold spec.frames normalized
// mosaics, or sRGB frames when raw_domain is off). Returns the denoised
// center frame in the model's output domain plus the forward trace.
struct WindowResult {
  Tensor output;       // (H,W) mosaic or (3,H,W) sRGB
  ForwardTrace trace;
};
WindowResult denoise_window(const ModelBundle& bundle, const std::vector<Tensor>& frames,
                            BayerPattern pattern);

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  double final_loss = 0.0;
  std::vector<std::string> log_lines;
  std::string final_checkpoint;
  long long steps_run = 0;
};

// Single-frame stages (predenoise / isp). The network is created inside and
// saved to out_dir; clean data comes from normalized sequences.
TrainResult train_unet_stage(const TrainConfig& config, const std::vector<Sequence>& clean,
                             const IspConfig& reference, const std::string& out_dir,
                             UNet* trained_out = nullptr);

// Multi-frame stages (pretrain_synthetic / finetune_real). `bundle` must hold
// constructed nets; predenoiser and isp stay frozen (checksum-stable) while
// net trains. Checkpoints are written per epoch into out_dir.
TrainResult train_videnet_stage(const TrainConfig& config, ModelBundle& bundle,
                                const std::vector<Sequence>& clean,
                                const std::string& out_dir);

// Convenience constructors for checkpointed networks.
void save_unet(const std::string& path, UNet& net, const std::string& role,
               const KvRecords& extra = {});
std::unique_ptr<UNet> load_unet(const std::string& path, const std::string& expected_role);
void save_videnet(const std::string& path, VideNet& net, const KvRecords& extra = {});
std::unique_ptr<VideNet> load_videnet(const std::string& path, VideNetSpec* spec_out = nullptr);

// ---------------------------------------------------------------------------
// Evaluation

struct FrameScore {
  int index = 0;
  Metrics raw;
  Metrics srgb;
};

struct EvalResult {
  std::vector<FrameScore> frames;
  Metrics mean_raw;
  Metrics mean_srgb;
  bool has_metrics = false;
};

// Runs the pipeline over every center position with full temporal context.
// Frames are reflect-padded to the network grid and cropped back. When
// `clean` is given, raw and sRGB scores are computed per frame; when
// `out_dir` is non-empty, denoised raw and sRGB sequences are written there.
EvalResult evaluate_sequence(const ModelBundle& bundle, const Sequence& noisy,
                             const Sequence* clean, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  int row = 0;
  VideNetSpec arch;
  bool has_raw_metrics = true;
  Metrics raw;
  Metrics srgb;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::string table_text;  // machine-parseable key=value lines
};

// Trains and evaluates the five-row cumulative configuration ladder at desk
// scale; row 1 operates in the sRGB domain, so its raw column is empty.
AblationReport run_ablation(const TrainConfig& base, const std::vector<Sequence>& clean_train,
                            const Sequence& clean_eval, const std::string& out_dir);

std::vector<AblationRow> ablation_ladder(const VideNetSpec& base);

}  // namespace rvd
