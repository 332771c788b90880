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
// Command-line entry point. One command per process:
//
//   calibrate   flat-field + bias stacks -> noise parameter table entry
//   synthesize  clean sequence + noise params -> noisy sequence
//   unprocess   sRGB frames -> synthetic clean mosaics
//   train       any training stage, driven by a key-value config file
//   denoise     run a trained model over a noisy sequence
//   evaluate    denoise + score against a clean reference
//   ablate      train/evaluate the cumulative configuration ladder
//   gradcheck   finite-difference verification of differentiable ops
//   isp         render raw mosaics to sRGB (reference or learned pipeline)
//
// Exit codes: 0 success, 2 usage error, 3 configuration error, 1 anything
// else. Failures print a single machine-parseable line to stderr:
//   error kind=<kind> message="..."
// Commands that produce files also write a reproducibility manifest
// (key-value text: command, code version, seed, inputs, resolved config).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "rvdlab/attention_ops.hpp"
#include "rvdlab/bayer.hpp"
#include "rvdlab/common.hpp"
#include "rvdlab/deform_conv.hpp"
#include "rvdlab/gradcheck.hpp"
#include "rvdlab/graph.hpp"
#include "rvdlab/image_io.hpp"
#include "rvdlab/metrics.hpp"
#include "rvdlab/noise.hpp"
#include "rvdlab/ops.hpp"
#include "rvdlab/reference_isp.hpp"
#include "rvdlab/rng.hpp"
#include "rvdlab/sequence.hpp"
#include "rvdlab/tensor.hpp"
#include "rvdlab/text_io.hpp"
#include "rvdlab/training.hpp"
#include "rvdlab/unet.hpp"
#include "rvdlab/videnet.hpp"

namespace {

namespace fs = std::filesystem;
using namespace rvd;

// Salt for networks created fresh by the CLI (no --init checkpoint).
constexpr std::uint64_t kCliInitStream = 0x1C11;

std::string single_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    if (c == '"') c = '\'';
  }
  return s;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Read-role paths may be given relative to $RVDLAB_DATA_ROOT. A path that
// exists as written always wins; missing paths are configuration errors so
// a broken run config fails with exit 3 before any work starts.
std::string resolve_input(const std::string& given, const std::string& what) {
  require(!given.empty(), ErrorKind::configuration, what + " path is required");
  if (fs::exists(given)) return given;
  if (const char* root = std::getenv("RVDLAB_DATA_ROOT")) {
    const fs::path alt = fs::path(root) / given;
    if (fs::exists(alt)) return alt.string();
  }
  throw Error(ErrorKind::configuration, what + " path does not exist: " + given);
}

Sequence load_normalized(const std::string& dir) {
  Sequence seq = load_sequence(dir);
  normalize_sequence(seq);
  return seq;
}

void write_manifest(const std::string& path, const std::string& command,
                    const KvRecords& extra) {
  KvRecords records;
  records.emplace_back("command", command);
  records.emplace_back("version", kVersion);
  records.insert(records.end(), extra.begin(), extra.end());
  write_kv_file(path, records);
}

Tensor clamp01(const Tensor& t) {
  Tensor out = t.clone();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
  return out;
}

BayerPattern pattern_from_flag(std::string name) {
  for (char& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return parse_pattern(name);
}

IspConfig reference_from_flag(const std::string& path) {
  if (path.empty()) return IspConfig{};
  return load_isp_config(resolve_input(path, "reference pipeline config"));
}

// Config file + repeatable --set key=value overrides (later wins).
KvRecords merged_config_records(const std::string& config_path,
                                const std::vector<std::string>& sets) {
  KvRecords records;
  if (!config_path.empty()) {
    require(fs::exists(config_path), ErrorKind::configuration,
            "config file not found: " + config_path);
    records = read_kv_file(config_path);
  }
  for (const std::string& kv : sets) {
    const std::size_t eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::configuration,
            "--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    records.erase(std::remove_if(records.begin(), records.end(),
                                 [&](const auto& r) { return r.first == key; }),
                  records.end());
    records.emplace_back(key, value);
  }
  return records;
}

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateOpts {
  std::string flat_dir, bias_dir, out;
  int iso = 0;
};

void run_calibrate(const CalibrateOpts& o) {
  const std::string flat_root = resolve_input(o.flat_dir, "flat-field root");
  const std::string bias_dir = resolve_input(o.bias_dir, "bias stack");
  require(o.iso > 0, ErrorKind::configuration, "--iso must be positive");

  std::vector<std::string> level_dirs;
  for (const auto& entry : fs::directory_iterator(flat_root)) {
    if (entry.is_directory()) level_dirs.push_back(entry.path().string());
  }
  std::sort(level_dirs.begin(), level_dirs.end());
  require(!level_dirs.empty(), ErrorKind::configuration,
          "flat-field root holds no exposure-level directories: " + flat_root);

  std::vector<std::vector<Tensor>> stacks;
  for (const std::string& dir : level_dirs) stacks.push_back(load_normalized(dir).frames);
  const std::vector<Tensor> bias = load_normalized(bias_dir).frames;

  const CalibrationResult result = estimate_noise_params(stacks, bias);

  NoiseTable table;
  if (fs::exists(o.out)) table = load_noise_table(o.out);
  table.entries.erase(std::remove_if(table.entries.begin(), table.entries.end(),
                                     [&](const auto& e) { return e.first == o.iso; }),
                      table.entries.end());
  table.entries.emplace_back(o.iso, result.params);
  std::sort(table.entries.begin(), table.entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (const fs::path parent = fs::path(o.out).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  save_noise_table(o.out, table);

  KvRecords manifest;
  manifest.emplace_back("flat_dir", flat_root);
  manifest.emplace_back("bias_dir", bias_dir);
  manifest.emplace_back("iso", std::to_string(o.iso));
  manifest.emplace_back("out", o.out);
  write_manifest(o.out + ".manifest", "calibrate", manifest);

  std::printf("calibrated iso=%d sigma_s_sq=%s sigma_r=%s read_variance=%s levels=%d\n", o.iso,
              fmt_g(result.params.sigma_s_sq).c_str(), fmt_g(result.params.sigma_r).c_str(),
              fmt_g(result.read_variance).c_str(), static_cast<int>(result.points.size()));
}

// ---------------------------------------------------------------------------
// synthesize

struct SynthesizeOpts {
  std::string clean, params, out;
  int iso = 0;  // 0 -> sole table entry
  std::uint64_t seed = 1;
};

void run_synthesize(const SynthesizeOpts& o) {
  const std::string clean_dir = resolve_input(o.clean, "clean sequence");
  const std::string params_path = resolve_input(o.params, "noise parameter table");
  const Sequence clean = load_normalized(clean_dir);
  const NoiseTable table = load_noise_table(params_path);

  int iso = o.iso;
  if (iso == 0) {
    require(table.entries.size() == 1, ErrorKind::configuration,
            "table holds several entries; pick one with --iso");
    iso = table.entries.front().first;
  }
  const NoiseParams& params = table.lookup(iso);

  const Sequence noisy = synthesize_noisy_sequence(clean, params, o.seed);
  save_sequence(o.out, noisy);

  KvRecords manifest;
  manifest.emplace_back("clean", clean_dir);
  manifest.emplace_back("params", params_path);
  manifest.emplace_back("iso", std::to_string(iso));
  manifest.emplace_back("seed", std::to_string(o.seed));
  manifest.emplace_back("sigma_s_sq", fmt_g(params.sigma_s_sq));
  manifest.emplace_back("sigma_r", fmt_g(params.sigma_r));
  write_manifest((fs::path(o.out) / "manifest.txt").string(), "synthesize", manifest);

  std::printf("synthesized frames=%d iso=%d sigma_s_sq=%s sigma_r=%s seed=%llu out=%s\n",
              noisy.frame_count(), iso, fmt_g(params.sigma_s_sq).c_str(),
              fmt_g(params.sigma_r).c_str(), static_cast<unsigned long long>(o.seed),
              o.out.c_str());
}

// ---------------------------------------------------------------------------
// unprocess

struct UnprocessOpts {
  std::string srgb, isp_config, pattern = "rggb", out;
};

void run_unprocess(const UnprocessOpts& o) {
  const std::string srgb_dir = resolve_input(o.srgb, "sRGB frame directory");
  const BayerPattern pattern = pattern_from_flag(o.pattern);
  const IspConfig config = reference_from_flag(o.isp_config);

  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(srgb_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      paths.push_back(entry.path().string());
    }
  }
  std::sort(paths.begin(), paths.end());
  require(!paths.empty(), ErrorKind::insufficient_data,
          "no .ppm frames in " + srgb_dir);

  Sequence seq;
  seq.name = "unprocessed";
  seq.meta.pattern = pattern;
  seq.meta.bit_depth = 16;
  seq.meta.black_level = 0.0;
  seq.meta.white_level = 65535.0;
  seq.meta.role = "unprocessed";
  seq.normalized = true;
  for (const std::string& path : paths) {
    seq.frames.push_back(unprocess_srgb(rgb_to_tensor(read_ppm(path)), pattern, config));
  }
  save_sequence(o.out, seq);

  KvRecords manifest;
  manifest.emplace_back("srgb", srgb_dir);
  if (!o.isp_config.empty()) manifest.emplace_back("isp_config", o.isp_config);
  manifest.emplace_back("pattern", to_string(pattern));
  write_manifest((fs::path(o.out) / "manifest.txt").string(), "unprocess", manifest);

  std::printf("unprocessed frames=%d pattern=%s out=%s\n", seq.frame_count(),
              to_string(pattern), o.out.c_str());
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string config, out, predenoiser, isp, isp_config, init;
  std::vector<std::string> sets;
  std::vector<std::string> clean;
  bool quiet = false;
};

void run_train(const TrainOpts& o) {
  const KvRecords records = merged_config_records(o.config, o.sets);
  TrainConfig cfg = TrainConfig::from_records(records);
  cfg.validate();
  require(!o.clean.empty(), ErrorKind::configuration,
          "at least one --clean sequence directory is required");
  require(!o.out.empty(), ErrorKind::configuration, "--out directory is required");

  std::vector<Sequence> clean;
  std::vector<std::string> clean_dirs;
  for (const std::string& dir : o.clean) {
    clean_dirs.push_back(resolve_input(dir, "clean sequence"));
    clean.push_back(load_normalized(clean_dirs.back()));
  }
  const IspConfig reference = reference_from_flag(o.isp_config);

  TrainResult result;
  const bool single_frame =
      cfg.stage == TrainStage::predenoise || cfg.stage == TrainStage::isp;
  if (single_frame) {
    result = train_unet_stage(cfg, clean, reference, o.out);
  } else {
    ModelBundle bundle;
    if (!o.init.empty()) {
      bundle.net = load_videnet(resolve_input(o.init, "initial checkpoint"), &cfg.arch);
    } else {
      Rng rng(mix_seed(cfg.seed, kCliInitStream));
      bundle.net = std::make_unique<VideNet>(cfg.arch, rng);
    }
    bundle.spec = cfg.arch;
    bundle.reference = reference;
    if (!o.predenoiser.empty()) {
      bundle.predenoiser =
          load_unet(resolve_input(o.predenoiser, "pre-denoiser checkpoint"), "predenoiser");
    }
    if (!o.isp.empty()) {
      bundle.isp = load_unet(resolve_input(o.isp, "rendering checkpoint"), "learned_isp");
    }
    if (cfg.arch.predenoise_guided) {
      require(bundle.predenoiser != nullptr, ErrorKind::dependency,
              "guided alignment needs --predenoiser CHECKPOINT");
    }
    if (cfg.stage_weights().beta > 0.0) {
      require(bundle.isp != nullptr, ErrorKind::dependency,
              "rendered-domain loss needs --isp CHECKPOINT");
    }
    result = train_videnet_stage(cfg, bundle, clean, o.out);
  }

  if (!o.quiet) {
    for (const std::string& line : result.log_lines) std::printf("%s\n", line.c_str());
  }

  KvRecords manifest;
  if (!o.config.empty()) manifest.emplace_back("config", o.config);
  for (const std::string& dir : clean_dirs) manifest.emplace_back("clean", dir);
  if (!o.predenoiser.empty()) manifest.emplace_back("predenoiser", o.predenoiser);
  if (!o.isp.empty()) manifest.emplace_back("isp", o.isp);
  if (!o.isp_config.empty()) manifest.emplace_back("isp_config", o.isp_config);
  if (!o.init.empty()) manifest.emplace_back("init", o.init);
  const KvRecords resolved = cfg.to_records();
  manifest.insert(manifest.end(), resolved.begin(), resolved.end());
  write_manifest((fs::path(o.out) / "manifest.txt").string(), "train", manifest);

  std::printf("done stage=%s steps=%lld final_loss=%.8f checkpoint=%s\n", to_string(cfg.stage),
              result.steps_run, result.final_loss, result.final_checkpoint.c_str());
}

// ---------------------------------------------------------------------------
// denoise / evaluate share the bundle loader

struct BundleOpts {
  std::string model, predenoiser, isp, isp_config;
};

ModelBundle load_bundle(const BundleOpts& o) {
  ModelBundle bundle;
  bundle.net = load_videnet(resolve_input(o.model, "model checkpoint"), &bundle.spec);
  if (!o.predenoiser.empty()) {
    bundle.predenoiser =
        load_unet(resolve_input(o.predenoiser, "pre-denoiser checkpoint"), "predenoiser");
  }
  if (!o.isp.empty()) {
    bundle.isp = load_unet(resolve_input(o.isp, "rendering checkpoint"), "learned_isp");
  }
  bundle.reference = reference_from_flag(o.isp_config);
  if (bundle.spec.predenoise_guided) {
    require(bundle.predenoiser != nullptr, ErrorKind::dependency,
            "guided alignment needs --predenoiser CHECKPOINT");
  }
  return bundle;
}

void bundle_manifest(const BundleOpts& o, KvRecords& manifest) {
  manifest.emplace_back("model", o.model);
  if (!o.predenoiser.empty()) manifest.emplace_back("predenoiser", o.predenoiser);
  if (!o.isp.empty()) manifest.emplace_back("isp", o.isp);
  if (!o.isp_config.empty()) manifest.emplace_back("isp_config", o.isp_config);
}

struct DenoiseOpts {
  BundleOpts bundle;
  std::string noisy, out;
  bool dump_offsets = false;
};

// Per-neighbor refinement offsets -> (3,h,w) summary: mean vertical and mean
// horizontal displacement plus mean displacement magnitude, averaged over
// neighbors, streams, and kernel taps. Written at the alignment grid
// resolution (padded plane size).
Tensor offset_summary(const std::vector<Tensor>& fields) {
  const Tensor& f0 = fields.front();
  const int planes = f0.dim(0), twok = f0.dim(1), h = f0.dim(2), w = f0.dim(3);
  const int taps = twok / 2;
  Tensor summary({3, h, w});
  const std::size_t cell = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  const double inv = 1.0 / (static_cast<double>(fields.size()) * planes * taps);
  for (const Tensor& field : fields) {
    for (int p = 0; p < planes; ++p) {
      for (int k = 0; k < taps; ++k) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const std::size_t at = static_cast<std::size_t>(y) * w + x;
            const double dy = field.at(p, 2 * k, y, x);
            const double dx = field.at(p, 2 * k + 1, y, x);
            summary[at] += inv * dy;
            summary[cell + at] += inv * dx;
            summary[2 * cell + at] += inv * std::hypot(dy, dx);
          }
        }
      }
    }
  }
  return summary;
}

void run_denoise(const DenoiseOpts& o) {
  const ModelBundle bundle = load_bundle(o.bundle);
  const VideNetSpec& spec = bundle.net->spec();
  const std::string noisy_dir = resolve_input(o.noisy, "noisy sequence");
  const Sequence seq = load_normalized(noisy_dir);
  const int n_half = spec.frames / 2;
  require(seq.frame_count() >= spec.frames, ErrorKind::insufficient_data,
          "sequence is shorter than the temporal window");
  const BayerPattern pattern = seq.meta.pattern;

  auto render = [&](const Tensor& mosaic) {
    if (bundle.isp) return learned_isp_mosaic(*bundle.isp, mosaic, pattern);
    return isp_forward(clamp01(mosaic), pattern, bundle.reference);
  };

  fs::create_directories(o.out);
  const fs::path srgb_dir = fs::path(o.out) / "srgb";
  fs::create_directories(srgb_dir);
  fs::path offsets_dir;
  if (o.dump_offsets) {
    offsets_dir = fs::path(o.out) / "offsets";
    fs::create_directories(offsets_dir);
  }

  std::vector<Tensor> out_raw;
  int written = 0;
  for (int tc = n_half; tc + n_half < seq.frame_count(); ++tc, ++written) {
    std::vector<Tensor> window;
    for (int i = tc - n_half; i <= tc + n_half; ++i) {
      const Tensor& m = seq.frames[static_cast<std::size_t>(i)];
      window.push_back(spec.raw_domain ? m
                                       : isp_forward(clamp01(m), pattern, bundle.reference));
    }
    const WindowResult wr = denoise_window(bundle, window, pattern);

    char name[32];
    std::snprintf(name, sizeof(name), "%07d", written);
    if (spec.raw_domain) {
      out_raw.push_back(wr.output);
      write_ppm((srgb_dir / (std::string(name) + ".ppm")).string(),
                tensor_to_rgb(render(wr.output), 255));
    } else {
      write_ppm((srgb_dir / (std::string(name) + ".ppm")).string(),
                tensor_to_rgb(clamp01(wr.output), 255));
    }
    if (o.dump_offsets && !wr.trace.final_offsets.empty()) {
      write_pfm((offsets_dir / ("offsets_" + std::string(name) + ".pfm")).string(),
                offset_summary(wr.trace.final_offsets));
    }
  }

  if (!out_raw.empty()) {
    Sequence denoised;
    denoised.name = "denoised";
    denoised.meta = seq.meta;
    denoised.meta.role = "denoised";
    denoised.frames = out_raw;
    denoised.normalized = true;
    save_sequence((fs::path(o.out) / "raw").string(), denoised);
  }

  KvRecords manifest;
  bundle_manifest(o.bundle, manifest);
  manifest.emplace_back("noisy", noisy_dir);
  manifest.emplace_back("dump_offsets", o.dump_offsets ? "1" : "0");
  write_manifest((fs::path(o.out) / "manifest.txt").string(), "denoise", manifest);

  std::printf("denoised frames=%d out=%s\n", written, o.out.c_str());
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  BundleOpts bundle;
  std::string noisy, clean, out;
};

void run_evaluate(const EvaluateOpts& o) {
  const ModelBundle bundle = load_bundle(o.bundle);
  const std::string noisy_dir = resolve_input(o.noisy, "noisy sequence");
  const Sequence noisy = load_normalized(noisy_dir);
  Sequence clean;
  const bool scored = !o.clean.empty();
  std::string clean_dir;
  if (scored) {
    clean_dir = resolve_input(o.clean, "clean sequence");
    clean = load_normalized(clean_dir);
  }

  const EvalResult result =
      evaluate_sequence(bundle, noisy, scored ? &clean : nullptr, o.out);

  std::vector<std::string> lines;
  for (const FrameScore& f : result.frames) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "frame=%d psnr_raw=%.4f ssim_raw=%.6f psnr_srgb=%.4f ssim_srgb=%.6f", f.index,
                  f.raw.psnr, f.raw.ssim, f.srgb.psnr, f.srgb.ssim);
    lines.emplace_back(buf);
  }
  if (result.has_metrics) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "mean psnr_raw=%.4f ssim_raw=%.6f psnr_srgb=%.4f ssim_srgb=%.6f",
                  result.mean_raw.psnr, result.mean_raw.ssim, result.mean_srgb.psnr,
                  result.mean_srgb.ssim);
    lines.emplace_back(buf);
  } else {
    lines.emplace_back("no reference given; outputs written without scores");
  }

  std::string report;
  for (const std::string& line : lines) {
    std::printf("%s\n", line.c_str());
    report += line + "\n";
  }
  write_text_file((fs::path(o.out) / "report.txt").string(), report);

  KvRecords manifest;
  bundle_manifest(o.bundle, manifest);
  manifest.emplace_back("noisy", noisy_dir);
  if (scored) manifest.emplace_back("clean", clean_dir);
  write_manifest((fs::path(o.out) / "manifest.txt").string(), "evaluate", manifest);
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOpts {
  std::string config, out, eval_dir;
  std::vector<std::string> sets;
  std::vector<std::string> clean;
};

void run_ablate(const AblateOpts& o) {
  const KvRecords records = merged_config_records(o.config, o.sets);
  TrainConfig cfg = TrainConfig::from_records(records);
  require(!o.clean.empty(), ErrorKind::configuration,
          "at least one --clean sequence directory is required");
  require(!o.eval_dir.empty(), ErrorKind::configuration,
          "--eval sequence directory is required");

  std::vector<Sequence> train_seqs;
  std::vector<std::string> clean_dirs;
  for (const std::string& dir : o.clean) {
    clean_dirs.push_back(resolve_input(dir, "clean sequence"));
    train_seqs.push_back(load_normalized(clean_dirs.back()));
  }
  const std::string eval_dir = resolve_input(o.eval_dir, "evaluation sequence");
  const Sequence eval_seq = load_normalized(eval_dir);

  // The runner writes out/ablation.txt itself; echo the table for pipelines.
  const AblationReport report = run_ablation(cfg, train_seqs, eval_seq, o.out);
  std::printf("%s", report.table_text.c_str());

  KvRecords manifest;
  if (!o.config.empty()) manifest.emplace_back("config", o.config);
  for (const std::string& dir : clean_dirs) manifest.emplace_back("clean", dir);
  manifest.emplace_back("eval", eval_dir);
  const KvRecords resolved = cfg.to_records();
  manifest.insert(manifest.end(), resolved.begin(), resolved.end());
  write_manifest((fs::path(o.out) / "manifest.txt").string(), "ablate", manifest);
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOpts {
  std::string op = "all", out;
  int trials = 5;
  std::uint64_t seed = 1;
};

struct OpResult {
  std::string name;
  GradCheckReport report;
};

GradCheckReport check_conv(Rng& rng) {
  const Tensor x = random_tensor({1, 2, 5, 6}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
  const Tensor b = random_tensor({3}, rng, -0.2, 0.2);
  return finite_diff_check(
      [](Tape& tape, const std::vector<Var>& in) {
        return random_projection(tape, conv2d(tape, in[0], in[1], in[2], 1, 1), 7);
      },
      {x, w, b});
}

GradCheckReport check_dconv(Rng& rng) {
  const Tensor x = random_tensor({1, 2, 5, 6}, rng);
  const Tensor off = random_tensor({1, 18, 5, 6}, rng, -1.4, 1.4);
  const Tensor mod = random_tensor({1, 9, 5, 6}, rng, 0.1, 0.9);
  const Tensor w = random_tensor({2, 2, 3, 3}, rng, -0.5, 0.5);
  const Tensor b = random_tensor({2}, rng, -0.2, 0.2);
  return finite_diff_check(
      [](Tape& tape, const std::vector<Var>& in) {
        return random_projection(
            tape, deform_conv2d(tape, in[0], in[1], in[2], in[3], in[4]), 7);
      },
      {x, off, mod, w, b});
}

GradCheckReport check_attention(Rng& rng) {
  const Tensor q = random_tensor({1, 2, 4, 5}, rng);
  const Tensor k = random_tensor({1, 2, 4, 5}, rng);
  const Tensor v = random_tensor({1, 2, 4, 5}, rng);
  GradCheckReport cc = finite_diff_check(
      [](Tape& tape, const std::vector<Var>& in) {
        return random_projection(tape, criss_cross_attend(tape, in[0], in[1], in[2]), 7);
      },
      {q, k, v});
  const Tensor g = random_tensor({3, 16}, rng);
  const GradCheckReport gram = finite_diff_check(
      [](Tape& tape, const std::vector<Var>& in) {
        return random_projection(tape, gram_softmax_recombine(tape, in[0]), 7);
      },
      {g});
  cc.max_rel_err = std::max(cc.max_rel_err, gram.max_rel_err);
  cc.max_abs_err = std::max(cc.max_abs_err, gram.max_abs_err);
  cc.elements += gram.elements;
  return cc;
}

void run_gradcheck(const GradcheckOpts& o) {
  constexpr double kTol = 1e-3;
  require(o.trials > 0, ErrorKind::configuration, "--trials must be positive");
  std::vector<std::string> ops;
  if (o.op == "all") {
    ops = {"conv", "dconv", "attention"};
  } else {
    require(o.op == "conv" || o.op == "dconv" || o.op == "attention",
            ErrorKind::configuration, "--op must be conv, dconv, attention, or all");
    ops = {o.op};
  }

  std::vector<OpResult> results;
  for (const std::string& name : ops) {
    OpResult r;
    r.name = name;
    for (int trial = 0; trial < o.trials; ++trial) {
      Rng rng = Rng(o.seed).substream(static_cast<std::uint64_t>(trial));
      GradCheckReport rep;
      if (name == "conv") rep = check_conv(rng);
      if (name == "dconv") rep = check_dconv(rng);
      if (name == "attention") rep = check_attention(rng);
      r.report.max_rel_err = std::max(r.report.max_rel_err, rep.max_rel_err);
      r.report.max_abs_err = std::max(r.report.max_abs_err, rep.max_abs_err);
      r.report.elements += rep.elements;
    }
    results.push_back(r);
  }

  std::string report_text;
  std::vector<std::string> failed;
  for (const OpResult& r : results) {
    const bool ok = r.report.pass(kTol);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "gradcheck op=%s trials=%d elements=%zu max_rel_err=%.3e %s",
                  r.name.c_str(), o.trials, r.report.elements, r.report.max_rel_err,
                  ok ? "pass" : "FAIL");
    std::printf("%s\n", buf);
    report_text += std::string(buf) + "\n";
    if (!ok) failed.push_back(r.name);
  }

  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_text_file((fs::path(o.out) / "report.txt").string(), report_text);
    KvRecords manifest;
    manifest.emplace_back("op", o.op);
    manifest.emplace_back("trials", std::to_string(o.trials));
    manifest.emplace_back("seed", std::to_string(o.seed));
    write_manifest((fs::path(o.out) / "manifest.txt").string(), "gradcheck", manifest);
  }

  if (!failed.empty()) {
    std::string list;
    for (const std::string& name : failed) list += (list.empty() ? "" : ", ") + name;
    throw Error(ErrorKind::consistency, "gradient verification failed for: " + list);
  }
}

// ---------------------------------------------------------------------------
// isp

struct IspOpts {
  std::string raw, out, mode = "reference", model, isp_config;
};

void run_isp(const IspOpts& o) {
  require(o.mode == "reference" || o.mode == "learned", ErrorKind::configuration,
          "--mode must be reference or learned");
  const std::string raw_dir = resolve_input(o.raw, "raw sequence");
  const Sequence seq = load_normalized(raw_dir);
  const BayerPattern pattern = seq.meta.pattern;

  std::unique_ptr<UNet> net;
  IspConfig config;
  if (o.mode == "learned") {
    require(!o.model.empty(), ErrorKind::configuration,
            "--mode learned needs --model CHECKPOINT");
    net = load_unet(resolve_input(o.model, "rendering checkpoint"), "learned_isp");
  } else {
    config = reference_from_flag(o.isp_config);
  }

  fs::create_directories(o.out);
  for (int i = 0; i < seq.frame_count(); ++i) {
    const Tensor& mosaic = seq.frames[static_cast<std::size_t>(i)];
    const Tensor srgb = net ? learned_isp_mosaic(*net, mosaic, pattern)
                            : isp_forward(clamp01(mosaic), pattern, config);
    char name[32];
    std::snprintf(name, sizeof(name), "%07d.ppm", i);
    write_ppm((fs::path(o.out) / name).string(), tensor_to_rgb(srgb, 255));
  }

  KvRecords manifest;
  manifest.emplace_back("raw", raw_dir);
  manifest.emplace_back("mode", o.mode);
  if (!o.model.empty()) manifest.emplace_back("model", o.model);
  if (!o.isp_config.empty()) manifest.emplace_back("isp_config", o.isp_config);
  write_manifest((fs::path(o.out) / "manifest.txt").string(), "isp", manifest);

  std::printf("rendered frames=%d mode=%s out=%s\n", seq.frame_count(), o.mode.c_str(),
              o.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"raw-video denoising laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CalibrateOpts cal;
  CLI::App* c_cal = app.add_subcommand(
      "calibrate", "Estimate noise parameters from flat-field and bias stacks");
  c_cal->add_option("--flat-dir", cal.flat_dir,
                    "Directory holding one sequence directory per exposure level")
      ->required();
  c_cal->add_option("--bias-dir", cal.bias_dir, "Bias (dark) sequence directory")->required();
  c_cal->add_option("--out", cal.out, "Noise parameter table to write or update")->required();
  c_cal->add_option("--iso", cal.iso, "Gain setting this calibration belongs to")->required();
  c_cal->callback([&] { run_calibrate(cal); });

  SynthesizeOpts syn;
  CLI::App* c_syn =
      app.add_subcommand("synthesize", "Add calibrated noise to a clean sequence");
  c_syn->add_option("--clean", syn.clean, "Clean sequence directory")->required();
  c_syn->add_option("--params", syn.params, "Noise parameter table")->required();
  c_syn->add_option("--iso", syn.iso, "Table entry to use (optional for single-entry tables)");
  c_syn->add_option("--seed", syn.seed, "Noise seed");
  c_syn->add_option("--out", syn.out, "Output sequence directory")->required();
  c_syn->callback([&] { run_synthesize(syn); });

  UnprocessOpts unp;
  CLI::App* c_unp = app.add_subcommand(
      "unprocess", "Invert the reference pipeline: sRGB frames to clean mosaics");
  c_unp->add_option("--srgb", unp.srgb, "Directory of .ppm frames")->required();
  c_unp->add_option("--isp-config", unp.isp_config, "Reference pipeline config (optional)");
  c_unp->add_option("--pattern", unp.pattern, "CFA pattern (rggb|bggr|grbg|gbrg)");
  c_unp->add_option("--out", unp.out, "Output sequence directory")->required();
  c_unp->callback([&] { run_unprocess(unp); });

  TrainOpts trn;
  CLI::App* c_trn = app.add_subcommand("train", "Run one training stage");
  c_trn->add_option("--config", trn.config, "Key-value training config file");
  c_trn->add_option("--set", trn.sets, "Override a config key (key=value, repeatable)");
  c_trn->add_option("--clean", trn.clean, "Clean sequence directory (repeatable)");
  c_trn->add_option("--out", trn.out, "Output directory (checkpoints, log)")->required();
  c_trn->add_option("--predenoiser", trn.predenoiser, "Pre-denoiser checkpoint");
  c_trn->add_option("--isp", trn.isp, "Learned rendering checkpoint");
  c_trn->add_option("--isp-config", trn.isp_config, "Reference pipeline config");
  c_trn->add_option("--init", trn.init, "Initial model checkpoint to continue from");
  c_trn->add_flag("--quiet", trn.quiet, "Suppress per-step log lines on stdout");
  c_trn->callback([&] { run_train(trn); });

  DenoiseOpts den;
  CLI::App* c_den = app.add_subcommand("denoise", "Denoise a noisy sequence");
  c_den->add_option("--model", den.bundle.model, "Model checkpoint")->required();
  c_den->add_option("--noisy", den.noisy, "Noisy sequence directory")->required();
  c_den->add_option("--out", den.out, "Output directory")->required();
  c_den->add_option("--predenoiser", den.bundle.predenoiser, "Pre-denoiser checkpoint");
  c_den->add_option("--isp", den.bundle.isp, "Learned rendering checkpoint");
  c_den->add_option("--isp-config", den.bundle.isp_config, "Reference pipeline config");
  c_den->add_flag("--dump-offsets", den.dump_offsets,
                  "Write per-frame alignment offset summaries (PFM)");
  c_den->callback([&] { run_denoise(den); });

  EvaluateOpts evl;
  CLI::App* c_evl =
      app.add_subcommand("evaluate", "Denoise and score against a clean reference");
  c_evl->add_option("--model", evl.bundle.model, "Model checkpoint")->required();
  c_evl->add_option("--noisy", evl.noisy, "Noisy sequence directory")->required();
  c_evl->add_option("--clean", evl.clean, "Clean reference sequence directory");
  c_evl->add_option("--out", evl.out, "Output directory")->required();
  c_evl->add_option("--predenoiser", evl.bundle.predenoiser, "Pre-denoiser checkpoint");
  c_evl->add_option("--isp", evl.bundle.isp, "Learned rendering checkpoint");
  c_evl->add_option("--isp-config", evl.bundle.isp_config, "Reference pipeline config");
  c_evl->callback([&] { run_evaluate(evl); });

  AblateOpts abl;
  CLI::App* c_abl = app.add_subcommand(
      "ablate", "Train and evaluate the cumulative configuration ladder");
  c_abl->add_option("--config", abl.config, "Key-value training config file");
  c_abl->add_option("--set", abl.sets, "Override a config key (key=value, repeatable)");
  c_abl->add_option("--clean", abl.clean, "Clean training sequence directory (repeatable)");
  c_abl->add_option("--eval", abl.eval_dir, "Clean evaluation sequence directory");
  c_abl->add_option("--out", abl.out, "Output directory")->required();
  c_abl->callback([&] { run_ablate(abl); });

  GradcheckOpts gck;
  CLI::App* c_gck = app.add_subcommand(
      "gradcheck", "Verify analytic gradients against finite differences");
  c_gck->add_option("--op", gck.op, "Operator: conv, dconv, attention, or all");
  c_gck->add_option("--trials", gck.trials, "Random trials per operator");
  c_gck->add_option("--seed", gck.seed, "Base seed");
  c_gck->add_option("--out", gck.out, "Optional output directory for the report");
  c_gck->callback([&] { run_gradcheck(gck); });

  IspOpts isp;
  CLI::App* c_isp = app.add_subcommand("isp", "Render raw mosaics to sRGB images");
  c_isp->add_option("--raw", isp.raw, "Raw sequence directory")->required();
  c_isp->add_option("--out", isp.out, "Output directory for .ppm frames")->required();
  c_isp->add_option("--mode", isp.mode, "reference (default) or learned");
  c_isp->add_option("--model", isp.model, "Rendering checkpoint (learned mode)");
  c_isp->add_option("--isp-config", isp.isp_config, "Reference pipeline config");
  c_isp->callback([&] { run_isp(isp); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error kind=usage message=\"" << single_line(e.what()) << "\"\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error kind=" << to_string(e.kind()) << " message=\""
              << single_line(e.what()) << "\"\n";
    return e.kind() == ErrorKind::configuration ? 3 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=\"" << single_line(e.what()) << "\"\n";
    return 1;
  }
  return 0;
}
