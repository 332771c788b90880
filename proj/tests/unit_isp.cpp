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
#include "rvdlab/reference_isp.hpp"
#include "rvdlab/rng.hpp"

using namespace rvd;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
  static int counter = 0;
  auto dir = fs::temp_directory_path() / ("rvdlab_isp_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir.string();
}

constexpr auto kPatterns = {BayerPattern::RGGB, BayerPattern::BGGR, BayerPattern::GRBG,
                            BayerPattern::GBRG};

}  // namespace

TEST_CASE("gamma encode matches the documented value") {
  // 0.25^(1/2.2) = 0.5325205447..., frozen from independent computation.
  CHECK(std::pow(0.25, 1.0 / 2.2) == doctest::Approx(0.5325205447).epsilon(1e-9));
  Tensor mosaic = Tensor::full({2, 2}, 0.25);
  IspConfig config;
  config.wb_gains = {1.0, 1.0, 1.0};
  const Tensor srgb = isp_forward(mosaic, BayerPattern::RGGB, config);
  for (std::size_t i = 0; i < srgb.size(); ++i) {
    CHECK(srgb[i] == doctest::Approx(0.5325205447).epsilon(1e-8));
  }
}

TEST_CASE("demosaic preserves the measured sample at every CFA site") {
  Rng rng(17);
  for (auto pattern : kPatterns) {
    Tensor mosaic({6, 6});
    for (std::size_t i = 0; i < mosaic.size(); ++i) mosaic[i] = rng.uniform(0.0, 1.0);
    const Tensor rgb = demosaic_bilinear(mosaic, pattern);
    const auto phases = plane_phases(pattern);
    const int channel_of_plane[4] = {0, 1, 2, 1};  // R,G1,B,G2 -> R,G,B
    const std::size_t plane = 36;
    for (int p = 0; p < 4; ++p) {
      for (int y = phases[p].dy; y < 6; y += 2) {
        for (int x = phases[p].dx; x < 6; x += 2) {
          const std::size_t i = static_cast<std::size_t>(y) * 6 + x;
          CHECK(rgb[static_cast<std::size_t>(channel_of_plane[p]) * plane + i] == mosaic[i]);
        }
      }
    }
  }
}

TEST_CASE("demosaic of a constant mosaic is constant") {
  for (auto pattern : kPatterns) {
    const Tensor rgb = demosaic_bilinear(Tensor::full({4, 4}, 0.3), pattern);
    for (std::size_t i = 0; i < rgb.size(); ++i) CHECK(rgb[i] == doctest::Approx(0.3).epsilon(1e-12));
  }
}

TEST_CASE("forward/inverse pipeline round-trips at CFA sites while in gamut") {
  Rng rng(23);
  const IspConfig config;  // gains (2,1,1.6), identity matrix, gamma 1/2.2
  for (auto pattern : kPatterns) {
    Tensor mosaic({8, 8});
    // 0.45 * max gain 2.0 = 0.9 < 1, so the forward clamp never engages.
    for (std::size_t i = 0; i < mosaic.size(); ++i) mosaic[i] = rng.uniform(0.0, 0.45);
    const Tensor srgb = isp_forward(mosaic, pattern, config);
    const Tensor back = isp_inverse(srgb, pattern, config);
    for (std::size_t i = 0; i < mosaic.size(); ++i) {
      CHECK(back[i] == doctest::Approx(mosaic[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("unprocess delegates to the inverse pipeline") {
  Rng rng(29);
  const IspConfig config;
  Tensor mosaic({4, 4});
  for (std::size_t i = 0; i < mosaic.size(); ++i) mosaic[i] = rng.uniform(0.05, 0.4);
  const Tensor srgb = isp_forward(mosaic, BayerPattern::GBRG, config);
  const Tensor raw = unprocess_srgb(srgb, BayerPattern::GBRG, config);
  for (std::size_t i = 0; i < mosaic.size(); ++i) {
    CHECK(raw[i] == doctest::Approx(mosaic[i]).epsilon(1e-9));
  }
}

TEST_CASE("config validation rejects bad parameters") {
  IspConfig config;
  config.wb_gains = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(validate_isp_config(config), Error);
  config = IspConfig{};
  config.gamma = 0.0;
  CHECK_THROWS_AS(validate_isp_config(config), Error);
  config = IspConfig{};
  config.ccm = {1, 1, 1, 1, 1, 1, 1, 1, 1};  // singular
  CHECK_THROWS_AS(validate_isp_config(config), Error);
}

TEST_CASE("3x3 inversion") {
  std::array<double, 9> m = {2, 0, 0, 0, 4, 0, 0, 0, 8};
  std::array<double, 9> inv;
  REQUIRE(invert3x3(m, &inv));
  CHECK(inv[0] == doctest::Approx(0.5));
  CHECK(inv[4] == doctest::Approx(0.25));
  CHECK(inv[8] == doctest::Approx(0.125));
  std::array<double, 9> singular = {1, 2, 3, 2, 4, 6, 1, 1, 1};
  CHECK(!invert3x3(singular, &inv));
}

TEST_CASE("ISP config file round-trips") {
  const std::string path = temp_dir() + "/isp.config";
  IspConfig config;
  config.wb_gains = {1.9, 1.0, 1.7};
  config.ccm = {1.2, -0.1, -0.1, -0.05, 1.1, -0.05, 0.0, -0.2, 1.2};
  config.gamma = 0.45;
  save_isp_config(path, config);
  const IspConfig back = load_isp_config(path);
  CHECK(back.wb_gains == config.wb_gains);
  CHECK(back.ccm == config.ccm);
  CHECK(back.gamma == config.gamma);

  write_text_file(path, "wb_gains 1 1\n");
  CHECK_THROWS_AS(load_isp_config(path), Error);
}

TEST_CASE("non-identity color matrix still round-trips at CFA sites") {
  IspConfig config;
  config.wb_gains = {1.8, 1.0, 1.5};
  config.ccm = {1.3, -0.2, -0.1, -0.1, 1.25, -0.15, 0.05, -0.3, 1.25};
  config.gamma = 1.0 / 2.2;
  Rng rng(31);
  Tensor mosaic({6, 6});
  for (std::size_t i = 0; i < mosaic.size(); ++i) mosaic[i] = rng.uniform(0.05, 0.35);
  const Tensor srgb = isp_forward(mosaic, BayerPattern::RGGB, config);
  const Tensor back = isp_inverse(srgb, BayerPattern::RGGB, config);
  for (std::size_t i = 0; i < mosaic.size(); ++i) {
    CHECK(back[i] == doctest::Approx(mosaic[i]).epsilon(1e-8));
  }
}
