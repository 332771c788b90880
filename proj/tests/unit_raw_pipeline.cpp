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

#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "rvdlab/bayer.hpp"
#include "rvdlab/image_io.hpp"
#include "rvdlab/rng.hpp"
#include "rvdlab/sequence.hpp"

using namespace rvd;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
  static int counter = 0;
  auto dir = fs::temp_directory_path() / ("rvdlab_raw_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir.string();
}

Tensor random_mosaic(int h, int w, Rng& rng) {
  Tensor t({h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, 4095.0);
  return t;
}

}  // namespace

TEST_CASE("pattern names parse and print") {
  CHECK(parse_pattern("RGGB") == BayerPattern::RGGB);
  CHECK(parse_pattern("bggr") == BayerPattern::BGGR);
  CHECK(std::string(to_string(BayerPattern::GRBG)) == "GRBG");
  CHECK_THROWS_AS(parse_pattern("RGBW"), Error);
}

TEST_CASE("plane order is [R,G1,B,G2] with G1 in the red row") {
  for (auto pattern : {BayerPattern::RGGB, BayerPattern::BGGR, BayerPattern::GRBG,
                       BayerPattern::GBRG}) {
    const auto ph = plane_phases(pattern);
    // R and G1 share a row; B and G2 share the other row.
    CHECK(ph[kPlaneR].dy == ph[kPlaneG1].dy);
    CHECK(ph[kPlaneB].dy == ph[kPlaneG2].dy);
    CHECK(ph[kPlaneR].dy != ph[kPlaneB].dy);
    // All four cell positions are covered exactly once.
    int seen[2][2] = {};
    for (const auto& p : ph) seen[p.dy][p.dx]++;
    CHECK(seen[0][0] == 1);
    CHECK(seen[0][1] == 1);
    CHECK(seen[1][0] == 1);
    CHECK(seen[1][1] == 1);
  }
}

TEST_CASE("2x2 BGGR cell packs to the documented canonical planes") {
  // Mosaic rows: [30 60; 50 100] under BGGR means B=30, G2=60, G1=50, R=100.
  const Tensor mosaic = Tensor::from({2, 2}, {30, 60, 50, 100});
  const Tensor planes = pack_planes(mosaic, BayerPattern::BGGR);
  CHECK(planes.dim(0) == 4);
  CHECK(planes[0] == 100.0);  // R
  CHECK(planes[1] == 50.0);   // G1
  CHECK(planes[2] == 30.0);   // B
  CHECK(planes[3] == 60.0);   // G2
}

TEST_CASE("pack/unpack round-trips bit-exactly for every pattern") {
  Rng rng(11);
  for (auto pattern : {BayerPattern::RGGB, BayerPattern::BGGR, BayerPattern::GRBG,
                       BayerPattern::GBRG}) {
    const Tensor mosaic = random_mosaic(6, 8, rng);
    const Tensor planes = pack_planes(mosaic, pattern);
    CHECK(planes.dim(1) == 3);
    CHECK(planes.dim(2) == 4);
    const Tensor back = unpack_planes(planes, pattern);
    REQUIRE(back.size() == mosaic.size());
    CHECK(std::memcmp(back.data(), mosaic.data(), mosaic.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("odd mosaic dims cannot pack") {
  CHECK_THROWS_AS(pack_planes(Tensor({3, 4}), BayerPattern::RGGB), Error);
  CHECK_THROWS_AS(pack_planes(Tensor({4, 5}), BayerPattern::RGGB), Error);
}

TEST_CASE("normalization maps documented DN example to 0.5 exactly") {
  BayerFrame frame{Tensor::from({2, 2}, {2167.5, 240.0, 4095.0, 5000.0}), false};
  normalize_frame(frame, 240.0, 4095.0);
  CHECK(frame.mosaic[0] == 0.5);  // (2167.5-240)/3855
  CHECK(frame.mosaic[1] == 0.0);  // at black level
  CHECK(frame.mosaic[2] == 1.0);  // at white level
  CHECK(frame.mosaic[3] == 1.0);  // clamped above white
  CHECK(frame.normalized);

  CHECK_THROWS_AS(normalize_frame(frame, 240.0, 4095.0), Error);  // state error
  BayerFrame other{Tensor({2, 2}), false};
  CHECK_THROWS_AS(normalize_frame(other, 100.0, 100.0), Error);  // parameter error
}

TEST_CASE("denormalize inverts normalize away from the clamp") {
  Rng rng(3);
  Tensor dn = random_mosaic(4, 4, rng);
  for (std::size_t i = 0; i < dn.size(); ++i) dn[i] = 240.0 + dn[i] / 4095.0 * 3855.0;
  BayerFrame frame{dn.clone(), false};
  normalize_frame(frame, 240.0, 4095.0);
  const Tensor back = denormalize(frame.mosaic, 240.0, 4095.0);
  for (std::size_t i = 0; i < dn.size(); ++i) CHECK(back[i] == doctest::Approx(dn[i]).epsilon(1e-12));
}

TEST_CASE("sequence round-trips through directory storage") {
  const std::string dir = temp_dir() + "/seq";
  Sequence seq;
  seq.name = "seq";
  seq.meta.pattern = BayerPattern::GRBG;
  seq.meta.bit_depth = 12;
  seq.meta.black_level = 240;
  seq.meta.white_level = 4095;
  seq.meta.iso = 1600;
  seq.meta.frame_rate = 20;
  seq.meta.role = "clean";
  Rng rng(5);
  for (int i = 0; i < 3; ++i) {
    Tensor f = random_mosaic(4, 6, rng);
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = std::round(f[j]);
    seq.frames.push_back(f);
  }
  save_sequence(dir, seq);

  const Sequence back = load_sequence(dir);
  CHECK(back.meta.pattern == BayerPattern::GRBG);
  CHECK(back.meta.bit_depth == 12);
  CHECK(back.meta.black_level == 240.0);
  CHECK(back.meta.iso == 1600);
  CHECK(back.meta.role == "clean");
  CHECK(back.frame_count() == 3);
  for (int i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < back.frames[i].size(); ++j) {
      CHECK(back.frames[i][j] == seq.frames[i][j]);
    }
  }
}

TEST_CASE("sequence loader flags gaps, inconsistency and missing metadata") {
  const std::string dir = temp_dir() + "/seq";
  Sequence seq;
  seq.meta.pattern = BayerPattern::RGGB;
  seq.meta.bit_depth = 10;
  seq.frames = {Tensor({4, 4}), Tensor({4, 4}), Tensor({4, 4})};
  save_sequence(dir, seq);

  SUBCASE("gap in frame numbering") {
    fs::remove(fs::path(dir) / frame_file_name(1));
    CHECK_THROWS_WITH_AS(load_sequence(dir), doctest::Contains("jumps"), Error);
  }
  SUBCASE("inconsistent frame size") {
    write_pgm((fs::path(dir) / frame_file_name(1)).string(), tensor_to_gray(Tensor({6, 6}), 1023));
    CHECK_THROWS_AS(load_sequence(dir), Error);
  }
  SUBCASE("missing sidecar") {
    fs::remove(fs::path(dir) / kSidecarName);
    CHECK_THROWS_AS(load_sequence(dir), Error);
  }
  SUBCASE("odd frame dims") {
    for (int i = 0; i < 3; ++i) fs::remove(fs::path(dir) / frame_file_name(i));
    write_pgm((fs::path(dir) / frame_file_name(0)).string(), tensor_to_gray(Tensor({3, 4}), 1023));
    CHECK_THROWS_AS(load_sequence(dir), Error);
  }
  SUBCASE("no frames") {
    for (int i = 0; i < 3; ++i) fs::remove(fs::path(dir) / frame_file_name(i));
    CHECK_THROWS_AS(load_sequence(dir), Error);
  }
}

TEST_CASE("meta parsing applies documented defaults and rejects junk") {
  KvRecords records = {{"pattern", "RGGB"}, {"bit_depth", "12"}};
  const FrameMeta meta = parse_meta(records, "test");
  CHECK(meta.black_level == 0.0);
  CHECK(meta.white_level == 4095.0);
  CHECK(meta.iso == 0);
  CHECK(meta.role == "unknown");

  CHECK_THROWS_AS(parse_meta({{"bit_depth", "12"}}, "test"), Error);  // pattern required
  CHECK_THROWS_AS(parse_meta({{"pattern", "RGGB"}}, "test"), Error);  // bit_depth required
  CHECK_THROWS_AS(parse_meta({{"pattern", "RGGB"}, {"bit_depth", "33"}}, "test"), Error);
}

TEST_CASE("normalize_sequence guards state") {
  Sequence seq;
  seq.meta.pattern = BayerPattern::RGGB;
  seq.meta.bit_depth = 12;
  seq.meta.black_level = 0;
  seq.meta.white_level = 4095;
  seq.frames = {Tensor::full({2, 2}, 2047.5)};
  normalize_sequence(seq);
  CHECK(seq.frames[0][0] == 0.5);
  CHECK_THROWS_AS(normalize_sequence(seq), Error);
}
