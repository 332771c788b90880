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

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rvdlab/image_io.hpp"
#include "rvdlab/rng.hpp"
#include "rvdlab/tensor.hpp"
#include "rvdlab/text_io.hpp"

using namespace rvd;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
  static int counter = 0;
  auto dir = fs::temp_directory_path() / ("rvdlab_core_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("tensor shapes, sharing and cloning") {
  Tensor t({2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK(t.dim(3) == 5);
  t.at(1, 2, 3, 4) = 7.0;
  Tensor shallow = t;
  CHECK(shallow.shares_buffer(t));
  CHECK(shallow.at(1, 2, 3, 4) == 7.0);
  Tensor deep = t.clone();
  CHECK(!deep.shares_buffer(t));
  deep.at(1, 2, 3, 4) = 9.0;
  CHECK(t.at(1, 2, 3, 4) == 7.0);

  Tensor r = t.reshaped({6, 20});
  CHECK(r.shares_buffer(t));
  CHECK_THROWS_AS((void)t.reshaped({7, 20}), Error);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0}), Error);
}

TEST_CASE("rng determinism and substreams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(7);
  Rng s1 = base.substream(1);
  Rng s2 = base.substream(2);
  CHECK(s1.next_u64() != s2.next_u64());
  // Substreams depend only on the seed, not on how much was drawn.
  Rng base2(7);
  (void)base2.uniform();
  (void)base2.uniform();
  Rng s1_again = base2.substream(1);
  CHECK(Rng(7).substream(1).next_u64() == s1_again.next_u64());
}

TEST_CASE("poisson sampler policies") {
  Rng rng(123);
  CHECK(rng.poisson(0.0) == 0.0);
  CHECK(rng.poisson(-3.0) == 0.0);

  // Above the cutoff the moment-matched Gaussian keeps mean ~ lambda.
  const double lambda = 2e5;
  double acc = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) acc += rng.poisson(lambda);
  CHECK(std::abs(acc / n - lambda) / lambda < 0.001);

  // Below the cutoff: integer counts.
  const double v = rng.poisson(8.5);
  CHECK(v == std::floor(v));
}

TEST_CASE("key-value text parsing") {
  const std::string text =
      "# comment line\n"
      "pattern RGGB\n"
      "  iso 1600  # trailing comment\n"
      "\n"
      "iso 3200\n"
      "ccm 1 0 0 0 1 0 0 0 1\n";
  const KvRecords records = parse_kv_text(text, "test");
  REQUIRE(records.size() == 4);
  CHECK(records[0].first == "pattern");
  CHECK(records[0].second == "RGGB");
  CHECK(records[1].second == "1600");
  CHECK(records[2].second == "3200");  // repeated keys keep order
  CHECK(parse_doubles(records[3].second, "ccm").size() == 9);

  CHECK_THROWS_AS(parse_kv_text("orphan\n", "test"), Error);
  CHECK_THROWS_AS(parse_double("1.5x", "v"), Error);
  CHECK_THROWS_AS(parse_long("9b", "v"), Error);

  std::string out;
  CHECK(find_value(records, "pattern", &out));
  CHECK(!find_value(records, "absent", &out));
  CHECK_THROWS_AS(require_value(records, "absent", "test"), Error);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-17, 123456.789, -0.25, 0.0, 1e300}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("16-bit PGM is big-endian and round-trips") {
  const std::string dir = temp_dir();
  const std::string path = dir + "/probe.pgm";
  GrayImage img;
  img.width = 2;
  img.height = 1;
  img.maxval = 65535;
  img.pixels = {0x1234, 0x00ff};
  write_pgm(path, img);

  std::ifstream in(path, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n2 1\n65535\n";
  REQUIRE(contents.size() == header.size() + 4);
  CHECK(contents.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(contents[header.size() + 0]) == 0x12);
  CHECK(static_cast<unsigned char>(contents[header.size() + 1]) == 0x34);
  CHECK(static_cast<unsigned char>(contents[header.size() + 2]) == 0x00);
  CHECK(static_cast<unsigned char>(contents[header.size() + 3]) == 0xff);

  const GrayImage back = read_pgm(path);
  CHECK(back.pixels == img.pixels);
  CHECK(back.maxval == 65535);
}

TEST_CASE("8-bit PGM and PPM round-trip") {
  const std::string dir = temp_dir();
  GrayImage g;
  g.width = 3;
  g.height = 2;
  g.maxval = 255;
  g.pixels = {0, 1, 2, 250, 128, 255};
  write_pgm(dir + "/g.pgm", g);
  CHECK(read_pgm(dir + "/g.pgm").pixels == g.pixels);

  RgbImage c;
  c.width = 2;
  c.height = 1;
  c.maxval = 65535;
  c.pixels = {1, 2, 3, 40000, 50000, 60000};
  write_ppm(dir + "/c.ppm", c);
  CHECK(read_ppm(dir + "/c.ppm").pixels == c.pixels);

  CHECK_THROWS_AS(read_pgm(dir + "/missing.pgm"), Error);
  write_text_file(dir + "/bad.pgm", "P6\n1 1\n255\nxxx");
  CHECK_THROWS_AS(read_pgm(dir + "/bad.pgm"), Error);
}

TEST_CASE("PFM dump is little-endian float, bottom row first") {
  const std::string dir = temp_dir();
  Tensor t = Tensor::from({1, 2, 1}, {1.0, 2.0});  // rows: top=1, bottom=2
  write_pfm(dir + "/t.pfm", t);
  std::ifstream in(dir + "/t.pfm", std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "Pf\n1 2\n-1.0\n";
  REQUIRE(contents.size() == header.size() + 8);
  float first;
  std::memcpy(&first, contents.data() + header.size(), 4);
  CHECK(first == 2.0f);  // bottom row written first
}
