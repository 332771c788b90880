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
//
// Loss arithmetic, training configuration, the single-frame wrappers, the
// window denoiser, and fast end-to-end smoke runs of both training stages.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "rvdlab/training.hpp"

using namespace rvd;
namespace fs = std::filesystem;

namespace {

double scalar_of(const Var& v) { return v->value.data()[0]; }

Tensor random_unit(const std::vector<int>& dims, std::uint64_t seed, double lo = 0.1,
                   double hi = 0.9) {
  Tensor t(dims);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

Sequence make_clean_sequence(const std::string& name, int frames, int h, int w,
                             std::uint64_t seed) {
  Sequence seq;
  seq.name = name;
  seq.meta.pattern = BayerPattern::RGGB;
  seq.meta.bit_depth = 12;
  seq.meta.black_level = 0.0;
  seq.meta.white_level = 4095.0;
  seq.meta.role = "clean";
  seq.normalized = true;
  for (int t = 0; t < frames; ++t) {
    seq.frames.push_back(random_unit({h, w}, seed + static_cast<std::uint64_t>(t)));
  }
  return seq;
}

VideNetSpec small_arch() {
  VideNetSpec spec;
  spec.channels = 4;
  spec.frames = 3;
  spec.pyramid_levels = 2;
  spec.fusion_blocks = 2;
  return spec;
}

UNetSpec mosaic_unet_spec(bool isp) {
  UNetSpec us;
  us.in_channels = 4;
  us.out_channels = isp ? 3 : 4;
  us.depth = 4;
  us.base_channels = 32;
  us.max_channels = 256;
  us.residual = !isp;
  us.upscale = isp ? 2 : 1;
  return us;
}

ModelBundle make_bundle(const VideNetSpec& spec, std::uint64_t seed, bool with_pre,
                        bool with_isp) {
  ModelBundle bundle;
  bundle.spec = spec;
  Rng rng(seed);
  bundle.net = std::make_unique<VideNet>(spec, rng);
  if (with_pre) {
    Rng r2(seed + 1);
    bundle.predenoiser = std::make_unique<UNet>(mosaic_unet_spec(false), r2);
  }
  if (with_isp) {
    Rng r3(seed + 2);
    bundle.isp = std::make_unique<UNet>(mosaic_unet_spec(true), r3);
  }
  return bundle;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::state;
}

std::string temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("rvdlab_train_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::uint64_t checksum_of(Module& m, const std::string& prefix) {
  std::vector<Param*> ps;
  m.collect(prefix, ps);
  return params_checksum(ps);
}

}  // namespace

TEST_CASE("loss: closed-form arithmetic for constant errors") {
  Tape tape;
  const std::vector<int> raw_dims = {1, 1, 4, 4};
  const std::vector<int> srgb_dims = {3, 4, 4};

  SUBCASE("raw plus weighted rendered term") {
    // |0.1| + 0.5 * |0.2| = 0.2
    LossOutputs out;
    out.raw = tape.leaf(Tensor::full(raw_dims, 0.1), true);
    out.srgb = tape.leaf(Tensor::full(srgb_dims, 0.2), true);
    LossTargets tgt;
    tgt.raw = Tensor::full(raw_dims, 0.0);
    tgt.srgb = Tensor::full(srgb_dims, 0.0);
    LossWeights w{0.0, 0.5, 0.0};
    LossBreakdown bd;
    Var total = compute_loss(tape, out, tgt, w, &bd);
    CHECK(scalar_of(total) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(bd.rec_raw == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(bd.rec_srgb == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(bd.rec == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(bd.tmp == doctest::Approx(0.0));
    CHECK(bd.total == doctest::Approx(scalar_of(total)));
  }

  SUBCASE("temporal pair with clean anchors") {
    // rec = |0.3|; pair = |0.3 - 0.1| = 0.2; anchors = 0.3 + 0.1 = 0.4;
    // tmp = 0.2 + 0.1*0.4 = 0.24; total = 0.3 + 1*0.24 = 0.54.
    LossOutputs out;
    out.raw = tape.leaf(Tensor::full(raw_dims, 0.3), true);
    out.tmp_first = out.raw;
    out.tmp_second = tape.leaf(Tensor::full(raw_dims, 0.1), true);
    LossTargets tgt;
    tgt.raw = Tensor::full(raw_dims, 0.0);
    LossWeights w{1.0, 0.0, 0.1};
    LossBreakdown bd;
    Var total = compute_loss(tape, out, tgt, w, &bd);
    CHECK(scalar_of(total) == doctest::Approx(0.54).epsilon(1e-12));
    CHECK(bd.tmp_pair == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(bd.tmp_anchor == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(bd.tmp == doctest::Approx(0.24).epsilon(1e-12));
  }

  SUBCASE("perfect prediction scores zero") {
    LossOutputs out;
    out.raw = tape.leaf(Tensor::full(raw_dims, 0.7), true);
    LossTargets tgt;
    tgt.raw = Tensor::full(raw_dims, 0.7);
    LossBreakdown bd;
    Var total = compute_loss(tape, out, tgt, LossWeights{}, &bd);
    CHECK(scalar_of(total) == doctest::Approx(0.0));
  }

  SUBCASE("weights scale their terms monotonically") {
    auto total_for = [&](double lambda, double beta, double gamma) {
      Tape t2;
      LossOutputs out;
      out.raw = t2.leaf(Tensor::full(raw_dims, 0.3), true);
      out.srgb = t2.leaf(Tensor::full(srgb_dims, 0.2), true);
      out.tmp_first = out.raw;
      out.tmp_second = t2.leaf(Tensor::full(raw_dims, 0.1), true);
      LossTargets tgt;
      tgt.raw = Tensor::full(raw_dims, 0.0);
      tgt.srgb = Tensor::full(srgb_dims, 0.0);
      return scalar_of(compute_loss(t2, out, tgt, LossWeights{lambda, beta, gamma}, nullptr));
    };
    CHECK(total_for(1.0, 0.0, 0.0) > total_for(0.5, 0.0, 0.0));
    CHECK(total_for(0.5, 0.0, 0.0) > total_for(0.0, 0.0, 0.0));
    CHECK(total_for(1.0, 0.5, 0.1) > total_for(1.0, 0.0, 0.1));
    CHECK(total_for(1.0, 0.0, 0.2) > total_for(1.0, 0.0, 0.1));
    CHECK(total_for(0.0, 0.0, 0.0) == doctest::Approx(0.3));
  }
}

TEST_CASE("loss: missing inputs for enabled terms are rejected") {
  Tape tape;
  const std::vector<int> raw_dims = {1, 1, 4, 4};
  LossOutputs out;
  out.raw = tape.leaf(Tensor::full(raw_dims, 0.1), true);
  LossTargets tgt;
  tgt.raw = Tensor::full(raw_dims, 0.0);

  CHECK(kind_of([&] {
          compute_loss(tape, out, tgt, LossWeights{1.0, 0.0, 0.0}, nullptr);
        }) == ErrorKind::configuration);
  CHECK(kind_of([&] {
          compute_loss(tape, out, tgt, LossWeights{0.0, 0.5, 0.0}, nullptr);
        }) == ErrorKind::configuration);
  CHECK(kind_of([&] {
          compute_loss(tape, out, tgt, LossWeights{-1.0, 0.0, 0.0}, nullptr);
        }) == ErrorKind::configuration);
}

TEST_CASE("loss: gradients reach the prediction") {
  Tape tape;
  const std::vector<int> dims = {1, 1, 4, 4};
  Var pred = tape.leaf(random_unit(dims, 21), true);
  LossOutputs out;
  out.raw = pred;
  LossTargets tgt;
  tgt.raw = Tensor::full(dims, 0.0);
  Var total = compute_loss(tape, out, tgt, LossWeights{}, nullptr);
  tape.backward(total);
  double gsum = 0.0;
  for (std::size_t i = 0; i < pred->grad.size(); ++i) gsum += std::abs(pred->grad.data()[i]);
  CHECK(gsum > 0.0);
}

TEST_CASE("training configuration: stage defaults, validation, round-trip") {
  TrainConfig cfg;
  cfg.arch = small_arch();

  SUBCASE("learning-rate and weight defaults per stage") {
    cfg.stage = TrainStage::pretrain_synthetic;
    CHECK(cfg.effective_lr() == doctest::Approx(1e-4));
    CHECK(cfg.effective_lr_fusion() == doctest::Approx(1e-4));
    LossWeights w = cfg.stage_weights();
    CHECK(w.lambda == 0.0);
    CHECK(w.beta == 0.0);
    CHECK(w.gamma == 0.0);

    cfg.stage = TrainStage::finetune_real;
    cfg.patch_size = 64;
    CHECK(cfg.effective_lr() == doctest::Approx(1e-6));
    CHECK(cfg.effective_lr_fusion() == doctest::Approx(1e-5));
    w = cfg.stage_weights();
    CHECK(w.lambda == doctest::Approx(1.0));
    CHECK(w.beta == doctest::Approx(0.5));
    CHECK(w.gamma == doctest::Approx(0.1));

    cfg.lr = 3e-5;
    cfg.lr_fusion = 7e-5;
    CHECK(cfg.effective_lr() == doctest::Approx(3e-5));
    CHECK(cfg.effective_lr_fusion() == doctest::Approx(7e-5));

    cfg.stage = TrainStage::predenoise;
    cfg.lr = 0.0;
    CHECK(cfg.effective_lr() == doctest::Approx(1e-4));
  }

  SUBCASE("patch-size constraints") {
    cfg.stage = TrainStage::pretrain_synthetic;
    cfg.patch_size = 33;  // odd
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
    cfg.patch_size = 6;  // below minimum
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
    cfg.patch_size = 32;
    CHECK_NOTHROW(cfg.validate());

    cfg.stage = TrainStage::predenoise;
    cfg.patch_size = 40;  // single-frame stages resample at stride 32
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
    cfg.patch_size = 64;
    CHECK_NOTHROW(cfg.validate());

    cfg.stage = TrainStage::finetune_real;
    cfg.patch_size = 32;
    cfg.arch.raw_domain = false;
    cfg.arch.packing = false;
    cfg.arch.predenoise_guided = false;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
    cfg.arch = small_arch();
    CHECK_NOTHROW(cfg.validate());
  }

  SUBCASE("records round-trip and unknown keys") {
    cfg.stage = TrainStage::finetune_real;
    cfg.patch_size = 96;
    cfg.batch_size = 2;
    cfg.lr = 2e-6;
    cfg.epochs = 3;
    cfg.steps_per_epoch = 11;
    cfg.seed = 42;
    cfg.temporal_pairs = "consecutive";
    cfg.noise = NoiseParams{0.004, 0.03};
    KvRecords recs = cfg.to_records();
    TrainConfig back = TrainConfig::from_records(recs);
    CHECK(back.stage == cfg.stage);
    CHECK(back.patch_size == cfg.patch_size);
    CHECK(back.batch_size == cfg.batch_size);
    CHECK(back.lr == doctest::Approx(cfg.lr));
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.steps_per_epoch == cfg.steps_per_epoch);
    CHECK(back.seed == cfg.seed);
    CHECK(back.temporal_pairs == cfg.temporal_pairs);
    CHECK(back.noise.sigma_s_sq == doctest::Approx(cfg.noise.sigma_s_sq));
    CHECK(back.noise.sigma_r == doctest::Approx(cfg.noise.sigma_r));
    CHECK(back.arch.channels == cfg.arch.channels);
    CHECK(back.arch.predenoise_guided == cfg.arch.predenoise_guided);

    recs.emplace_back("mystery_knob", "1");
    CHECK(kind_of([&] { TrainConfig::from_records(recs); }) == ErrorKind::configuration);
  }

  SUBCASE("stage names") {
    CHECK(parse_stage("predenoise") == TrainStage::predenoise);
    CHECK(parse_stage("isp") == TrainStage::isp);
    CHECK(parse_stage("pretrain_synthetic") == TrainStage::pretrain_synthetic);
    CHECK(parse_stage("finetune_real") == TrainStage::finetune_real);
    for (TrainStage s : {TrainStage::predenoise, TrainStage::isp,
                         TrainStage::pretrain_synthetic, TrainStage::finetune_real}) {
      CHECK(parse_stage(to_string(s)) == s);
    }
    CHECK(kind_of([&] { parse_stage("warmup"); }) == ErrorKind::configuration);
  }

  SUBCASE("temporal pair mode is checked") {
    cfg.stage = TrainStage::pretrain_synthetic;
    cfg.patch_size = 32;
    cfg.temporal_pairs = "sideways";
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
  }
}

TEST_CASE("single-frame denoising wrapper is the identity at initialization") {
  Rng rng(5);
  UNet net(mosaic_unet_spec(false), rng);
  // 20x28 exercises the internal pad-to-grid path (not a multiple of 32).
  const Tensor mosaic = random_unit({20, 28}, 17);
  const Tensor out = predenoise_mosaic(net, mosaic, BayerPattern::RGGB);
  REQUIRE(out.shape() == mosaic.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.data()[i] == mosaic.data()[i]);  // bit-exact: zero residual head
  }
  SUBCASE("multi-channel input is rejected") {
    CHECK_THROWS_AS(predenoise_mosaic(net, random_unit({3, 20, 28}, 1), BayerPattern::RGGB),
                    Error);
  }
}

TEST_CASE("learned rendering wrapper emits a clamped three-channel image") {
  Rng rng(6);
  UNet net(mosaic_unet_spec(true), rng);
  const Tensor mosaic = random_unit({20, 28}, 19);
  const Tensor out = learned_isp_mosaic(net, mosaic, BayerPattern::RGGB);
  REQUIRE(out.ndim() == 3);
  CHECK(out.dim(0) == 3);
  CHECK(out.dim(1) == 20);
  CHECK(out.dim(2) == 28);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.data()[i] >= 0.0);
    CHECK(out.data()[i] <= 1.0);
  }
}

TEST_CASE("window denoiser: identity at initialization across the switch ladder") {
  const std::vector<AblationRow> ladder = ablation_ladder(small_arch());
  REQUIRE(ladder.size() == 5);
  for (const AblationRow& row : ladder) {
    CAPTURE(row.row);
    ModelBundle bundle = make_bundle(row.arch, 100 + static_cast<std::uint64_t>(row.row),
                                     row.arch.predenoise_guided, false);
    std::vector<Tensor> frames;
    for (int t = 0; t < row.arch.frames; ++t) {
      if (row.arch.raw_domain) {
        frames.push_back(random_unit({24, 24}, 40 + static_cast<std::uint64_t>(t)));
      } else {
        frames.push_back(random_unit({3, 24, 24}, 40 + static_cast<std::uint64_t>(t)));
      }
    }
    const WindowResult res = denoise_window(bundle, frames, BayerPattern::RGGB);
    const Tensor& center = frames[static_cast<std::size_t>(row.arch.center_index())];
    REQUIRE(res.output.shape() == center.shape());
    double max_err = 0.0;
    for (std::size_t i = 0; i < center.size(); ++i) {
      max_err = std::max(max_err, std::abs(res.output.data()[i] - center.data()[i]));
    }
    CHECK(max_err == 0.0);  // zero-initialized residual head
  }
}

TEST_CASE("window denoiser: input contracts") {
  VideNetSpec spec = small_arch();
  ModelBundle bundle = make_bundle(spec, 3, true, false);
  std::vector<Tensor> frames;
  for (int t = 0; t < 2; ++t) frames.push_back(random_unit({24, 24}, 50 + t));
  CHECK(kind_of([&] { denoise_window(bundle, frames, BayerPattern::RGGB); }) ==
        ErrorKind::dimension);

  SUBCASE("guided model requires the single-frame denoiser") {
    ModelBundle bare = make_bundle(spec, 3, false, false);
    std::vector<Tensor> three;
    for (int t = 0; t < 3; ++t) three.push_back(random_unit({24, 24}, 60 + t));
    CHECK(kind_of([&] { denoise_window(bare, three, BayerPattern::RGGB); }) ==
          ErrorKind::dependency);
  }
}

TEST_CASE("model files: save and load round-trips") {
  const std::string dir = temp_dir("ckpt");

  SUBCASE("single-frame network with role check") {
    Rng rng(9);
    UNet net(mosaic_unet_spec(false), rng);
    const std::string path = dir + "/pre.ckpt";
    save_unet(path, net, "predenoiser");
    std::unique_ptr<UNet> back = load_unet(path, "predenoiser");
    CHECK(checksum_of(*back, "unet") == checksum_of(net, "unet"));
    CHECK(kind_of([&] { load_unet(path, "learned_isp"); }) == ErrorKind::consistency);
  }

  SUBCASE("video network with embedded architecture") {
    VideNetSpec spec = small_arch();
    spec.two_pass_spatial = true;
    Rng rng(11);
    VideNet net(spec, rng);
    const std::string path = dir + "/model.ckpt";
    save_videnet(path, net);
    VideNetSpec spec_back;
    std::unique_ptr<VideNet> back = load_videnet(path, &spec_back);
    CHECK(spec_back.channels == spec.channels);
    CHECK(spec_back.frames == spec.frames);
    CHECK(spec_back.pyramid_levels == spec.pyramid_levels);
    CHECK(spec_back.fusion_blocks == spec.fusion_blocks);
    CHECK(spec_back.two_pass_spatial == spec.two_pass_spatial);
    CHECK(checksum_of(*back, "model") == checksum_of(net, "model"));
  }
}

TEST_CASE("single-frame training stage: smoke run, logs, checkpoints") {
  const std::string dir = temp_dir("unet_stage");
  std::vector<Sequence> clean;
  clean.push_back(make_clean_sequence("a", 2, 48, 48, 70));
  clean.push_back(make_clean_sequence("b", 2, 48, 48, 80));

  TrainConfig cfg;
  cfg.stage = TrainStage::predenoise;
  cfg.patch_size = 32;
  cfg.batch_size = 1;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 2;
  cfg.seed = 3;
  cfg.arch = small_arch();

  UNet trained;
  const TrainResult res = train_unet_stage(cfg, clean, IspConfig{}, dir, &trained);
  CHECK(res.steps_run == 2);
  REQUIRE(res.log_lines.size() >= 2);
  CHECK(res.log_lines[0].find("step=1 epoch=1 stage=predenoise loss=") == 0);
  CHECK(res.log_lines[0].find("lr=0.0001") != std::string::npos);
  CHECK(std::isfinite(res.final_loss));
  CHECK(res.final_loss > 0.0);
  REQUIRE(fs::exists(res.final_checkpoint));
  CHECK(fs::exists(dir + "/train.log"));

  std::unique_ptr<UNet> back = load_unet(res.final_checkpoint, "predenoiser");
  CHECK(checksum_of(*back, "unet") == checksum_of(trained, "unet"));
}

TEST_CASE("multi-frame training stage: smoke run keeps helpers frozen and is deterministic") {
  std::vector<Sequence> clean;
  clean.push_back(make_clean_sequence("train", 5, 48, 48, 90));

  TrainConfig cfg;
  cfg.stage = TrainStage::pretrain_synthetic;
  cfg.patch_size = 32;
  cfg.batch_size = 1;
  cfg.epochs = 1;
  cfg.steps_per_epoch = 2;
  cfg.seed = 7;
  cfg.arch = small_arch();

  auto run_once = [&](const std::string& tag, double* loss_out, std::uint64_t* sum_out) {
    const std::string dir = temp_dir(tag);
    ModelBundle bundle = make_bundle(cfg.arch, 500, true, false);
    const std::uint64_t pre_before = checksum_of(*bundle.predenoiser, "pre");
    const TrainResult res = train_videnet_stage(cfg, bundle, clean, dir);
    CHECK(res.steps_run == 2);
    REQUIRE(!res.log_lines.empty());
    CHECK(res.log_lines[0].find("stage=pretrain_synthetic") != std::string::npos);
    CHECK(res.log_lines[0].find("lambda=0 ") != std::string::npos);
    CHECK(res.log_lines[0].find("beta=0 ") != std::string::npos);
    CHECK(std::isfinite(res.final_loss));
    CHECK(fs::exists(res.final_checkpoint));
    CHECK(checksum_of(*bundle.predenoiser, "pre") == pre_before);
    *loss_out = res.final_loss;
    *sum_out = checksum_of(*bundle.net, "model");
  };

  double loss_a = 0.0, loss_b = 0.0;
  std::uint64_t sum_a = 0, sum_b = 0;
  run_once("vide_a", &loss_a, &sum_a);
  run_once("vide_b", &loss_b, &sum_b);
  CHECK(loss_a == loss_b);
  CHECK(sum_a == sum_b);
  CHECK(loss_a > 0.0);
}

TEST_CASE("multi-frame training stage: missing helper models are reported") {
  std::vector<Sequence> clean;
  clean.push_back(make_clean_sequence("train", 5, 48, 48, 91));

  TrainConfig cfg;
  cfg.stage = TrainStage::pretrain_synthetic;
  cfg.patch_size = 32;
  cfg.steps_per_epoch = 1;
  cfg.arch = small_arch();

  SUBCASE("guided architecture needs the single-frame denoiser") {
    ModelBundle bundle = make_bundle(cfg.arch, 7, false, false);
    CHECK(kind_of([&] { train_videnet_stage(cfg, bundle, clean, temp_dir("dep_pre")); }) ==
          ErrorKind::dependency);
  }
  SUBCASE("rendered loss term needs the learned renderer") {
    cfg.stage = TrainStage::finetune_real;
    ModelBundle bundle = make_bundle(cfg.arch, 7, true, false);
    CHECK(kind_of([&] { train_videnet_stage(cfg, bundle, clean, temp_dir("dep_isp")); }) ==
          ErrorKind::dependency);
  }
}
