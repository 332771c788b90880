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

#include <cstdint>
#include <string>
#include <vector>

#include "rvdlab/common.hpp"
#include "rvdlab/tensor.hpp"

namespace rvd {

// Single-channel image with integer sample values (raw sensor data). Samples
// above 255 are stored as 16-bit big-endian per the binary PGM convention.
struct GrayImage {
  int width = 0;
  int height = 0;
  int maxval = 65535;
  std::vector<std::uint16_t> pixels;  // row-major
};

// Interleaved RGB image, same sample convention as GrayImage.
struct RgbImage {
  int width = 0;
  int height = 0;
  int maxval = 65535;
  std::vector<std::uint16_t> pixels;  // row-major, RGB triplets
};

GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& image);

RgbImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const RgbImage& image);

// Float image for diagnostics (offset-field dumps). 1 or 3 channels.
// Written little-endian (negative scale), bottom row first, per convention.
void write_pfm(const std::string& path, const Tensor& image);  // (C,H,W), C in {1,3}

// Conversions between image containers and double tensors.
Tensor gray_to_tensor(const GrayImage& image);              // (H,W), raw DNs
GrayImage tensor_to_gray(const Tensor& t, int maxval);      // rounds + clamps
Tensor rgb_to_tensor(const RgbImage& image);                // (3,H,W), scaled to [0,1]
RgbImage tensor_to_rgb(const Tensor& t, int maxval);        // expects [0,1], rounds + clamps

}  // namespace rvd
