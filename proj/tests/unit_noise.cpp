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

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "rvdlab/noise.hpp"

using namespace rvd;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
  static int counter = 0;
  auto dir = fs::temp_directory_path() / ("rvdlab_noise_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir.string();
}

std::vector<Tensor> flat_stack(double level, const NoiseParams& params, int frames, int side,
                               Rng& rng) {
  std::vector<Tensor> stack;
  const Tensor clean = Tensor::full({side, side}, level);
  for (int i = 0; i < frames; ++i) stack.push_back(sample_noise(clean, params, rng));
  return stack;
}

}  // namespace

TEST_CASE("predicted variance matches the documented example") {
  // sigma_s_sq=0.01 at signal 0.5 with sigma_r=0.02: 0.005 + 0.0004 = 0.0054.
  CHECK(noise_variance({0.01, 0.02}, 0.5) == doctest::Approx(0.0054).epsilon(1e-12));
}

TEST_CASE("zero shot coefficient degenerates to additive read noise only") {
  const Tensor clean = Tensor::full({8, 8}, 0.37);
  Rng rng(99);
  const Tensor pure = sample_noise(clean, {0.0, 0.0}, rng);
  for (std::size_t i = 0; i < pure.size(); ++i) CHECK(pure[i] == 0.37);

  Rng rng2(99);
  const Tensor read_only = sample_noise(clean, {0.0, 0.05}, rng2);
  double acc = 0.0;
  for (std::size_t i = 0; i < read_only.size(); ++i) acc += read_only[i] - 0.37;
  CHECK(std::abs(acc / static_cast<double>(read_only.size())) < 0.05);
}

TEST_CASE("sampled moments track the model at loose tolerance") {
  const NoiseParams params{0.01, 0.02};
  const double y = 0.5;
  const int n = 200000;
  Rng rng(2024);
  const Tensor clean = Tensor::full({n}, y);
  const Tensor noisy = sample_noise(clean, params, rng);
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += noisy[static_cast<std::size_t>(i)];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = noisy[static_cast<std::size_t>(i)] - mean;
    var += d * d;
  }
  var /= (n - 1);
  CHECK(std::abs(mean - y) / y < 0.01);
  CHECK(std::abs(var - noise_variance(params, y)) / noise_variance(params, y) < 0.03);
}

TEST_CASE("samples are not clamped") {
  // At a very dark signal with strong read noise, negatives must appear.
  const Tensor clean = Tensor::full({1000}, 0.001);
  Rng rng(7);
  const Tensor noisy = sample_noise(clean, {0.0001, 0.05}, rng);
  bool negative_seen = false;
  for (std::size_t i = 0; i < noisy.size(); ++i) negative_seen |= (noisy[i] < 0.0);
  CHECK(negative_seen);
}

TEST_CASE("noise table round-trips and validates") {
  const std::string path = temp_dir() + "/noise.params";
  NoiseTable table;
  table.entries = {{1600, {0.004, 0.02}}, {3200, {0.008, 0.03}}};
  save_noise_table(path, table);
  const NoiseTable back = load_noise_table(path);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.lookup(1600).sigma_s_sq == 0.004);
  CHECK(back.lookup(3200).sigma_r == 0.03);
  CHECK_THROWS_AS(back.lookup(6400), Error);

  write_text_file(path, "units electrons\niso 1600\nsigma_s_sq 1\nsigma_r 1\n");
  CHECK_THROWS_AS(load_noise_table(path), Error);
  write_text_file(path, "units normalized\niso 1600\nsigma_s_sq 1\n");
  CHECK_THROWS_AS(load_noise_table(path), Error);  // incomplete entry
  write_text_file(path, "units normalized\nsigma_s_sq 1\n");
  CHECK_THROWS_AS(load_noise_table(path), Error);  // value before iso
}

TEST_CASE("photon-transfer calibration recovers parameters on flat stacks") {
  const NoiseParams truth{0.004, 0.02};
  Rng rng(314159);
  std::vector<std::vector<Tensor>> exposures;
  for (double level : {0.2, 0.4, 0.6, 0.8}) {
    exposures.push_back(flat_stack(level, truth, 100, 64, rng));
  }
  const std::vector<Tensor> bias = flat_stack(0.0, {0.0, truth.sigma_r}, 100, 64, rng);

  const CalibrationResult result = estimate_noise_params(exposures, bias);
  CHECK(std::abs(result.params.sigma_s_sq - truth.sigma_s_sq) / truth.sigma_s_sq < 0.05);
  CHECK(std::abs(result.params.sigma_r - truth.sigma_r) / truth.sigma_r < 0.05);
  REQUIRE(result.points.size() == 4);
  CHECK(result.points[0].mean == doctest::Approx(0.2).epsilon(0.01));
  // Total variance at each exposure tracks the model prediction.
  for (std::size_t e = 0; e < result.points.size(); ++e) {
    const double predicted = noise_variance(truth, result.points[e].mean);
    CHECK(std::abs(result.points[e].variance - predicted) / predicted < 0.05);
  }
}

TEST_CASE("calibration raises typed errors on bad inputs") {
  const NoiseParams truth{0.004, 0.02};
  Rng rng(99);
  const std::vector<Tensor> bias = flat_stack(0.0, {0.0, 0.02}, 20, 16, rng);

  SUBCASE("fewer than 3 exposure levels") {
    std::vector<std::vector<Tensor>> two = {flat_stack(0.2, truth, 20, 16, rng),
                                            flat_stack(0.6, truth, 20, 16, rng)};
    CHECK_THROWS_WITH_AS(estimate_noise_params(two, bias), doctest::Contains("3 exposure"),
                         Error);
  }
  SUBCASE("single-frame stack") {
    std::vector<std::vector<Tensor>> stacks = {flat_stack(0.2, truth, 20, 16, rng),
                                               flat_stack(0.4, truth, 1, 16, rng),
                                               flat_stack(0.6, truth, 20, 16, rng)};
    CHECK_THROWS_AS(estimate_noise_params(stacks, bias), Error);
  }
  SUBCASE("duplicate exposure levels") {
    std::vector<std::vector<Tensor>> stacks;
    for (int i = 0; i < 3; ++i) {
      std::vector<Tensor> s;
      for (int f = 0; f < 5; ++f) s.push_back(Tensor::full({8, 8}, 0.5));
      stacks.push_back(std::move(s));
    }
    CHECK_THROWS_AS(estimate_noise_params(stacks, bias), Error);
  }
  SUBCASE("variance shrinking with exposure is physically implausible") {
    // Fake stacks whose noise scale drops as the mean rises: negative slope.
    std::vector<std::vector<Tensor>> stacks;
    const double levels[3] = {0.2, 0.5, 0.8};
    const double spreads[3] = {0.06, 0.04, 0.01};
    for (int e = 0; e < 3; ++e) {
      std::vector<Tensor> s;
      for (int f = 0; f < 30; ++f) {
        Tensor frame = Tensor::full({16, 16}, levels[e]);
        for (std::size_t i = 0; i < frame.size(); ++i) {
          frame[i] += rng.normal(0.0, spreads[e]);
        }
        s.push_back(std::move(frame));
      }
      stacks.push_back(std::move(s));
    }
    CHECK_THROWS_WITH_AS(estimate_noise_params(stacks, bias),
                         doctest::Contains("not positive"), Error);
  }
}

TEST_CASE("synthesized sequences are reproducible per frame") {
  Sequence clean;
  clean.meta.pattern = BayerPattern::RGGB;
  clean.meta.bit_depth = 12;
  clean.meta.black_level = 0;
  clean.meta.white_level = 4095;
  clean.meta.role = "clean";
  clean.normalized = true;
  Rng rng(1);
  for (int i = 0; i < 3; ++i) {
    Tensor f({4, 4});
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = rng.uniform(0.1, 0.9);
    clean.frames.push_back(f);
  }

  const NoiseParams params{0.01, 0.02};
  const Sequence a = synthesize_noisy_sequence(clean, params, 555);
  const Sequence b = synthesize_noisy_sequence(clean, params, 555);
  const Sequence c = synthesize_noisy_sequence(clean, params, 556);
  CHECK(a.meta.role == "noisy");
  for (int i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < a.frames[i].size(); ++j) {
      CHECK(a.frames[i][j] == b.frames[i][j]);
    }
  }
  bool differs = false;
  for (std::size_t j = 0; j < a.frames[0].size(); ++j) {
    differs |= (a.frames[0][j] != c.frames[0][j]);
  }
  CHECK(differs);

  Sequence raw_dn = clean;
  raw_dn.normalized = false;
  CHECK_THROWS_AS(synthesize_noisy_sequence(raw_dn, params, 1), Error);
}
