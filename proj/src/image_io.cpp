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

#include "rvdlab/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rvd {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  if (token.empty()) fail(ErrorKind::metadata, path + ": truncated header");
  return token;
}

int parse_header_int(std::istream& in, const std::string& path, const char* what) {
  const std::string token = next_token(in, path);
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    fail(ErrorKind::metadata, path + ": bad " + what + " '" + token + "'");
  }
}

void read_samples(std::istream& in, const std::string& path, int maxval,
                  std::vector<std::uint16_t>& out) {
  if (maxval > 255) {
    std::vector<unsigned char> raw(out.size() * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      fail(ErrorKind::metadata, path + ": truncated pixel data");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
  } else {
    std::vector<unsigned char> raw(out.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      fail(ErrorKind::metadata, path + ": truncated pixel data");
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = raw[i];
  }
}

void write_samples(std::ostream& out, int maxval, const std::vector<std::uint16_t>& px) {
  if (maxval > 255) {
    std::vector<unsigned char> raw(px.size() * 2);
    for (std::size_t i = 0; i < px.size(); ++i) {
      raw[2 * i] = static_cast<unsigned char>(px[i] >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(px[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  } else {
    std::vector<unsigned char> raw(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) raw[i] = static_cast<unsigned char>(px[i]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open for reading: " + path);
  const std::string magic = next_token(in, path);
  if (magic != "P5") fail(ErrorKind::metadata, path + ": not a binary PGM (magic '" + magic + "')");
  GrayImage img;
  img.width = parse_header_int(in, path, "width");
  img.height = parse_header_int(in, path, "height");
  img.maxval = parse_header_int(in, path, "maxval");
  require(img.width > 0 && img.height > 0, ErrorKind::metadata, path + ": bad dimensions");
  require(img.maxval > 0 && img.maxval < 65536, ErrorKind::metadata, path + ": bad maxval");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  read_samples(in, path, img.maxval, img.pixels);
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open for writing: " + path);
  out << "P5\n" << image.width << " " << image.height << "\n" << image.maxval << "\n";
  write_samples(out, image.maxval, image.pixels);
  if (!out) fail(ErrorKind::io, "write failed: " + path);
}

RgbImage read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open for reading: " + path);
  const std::string magic = next_token(in, path);
  if (magic != "P6") fail(ErrorKind::metadata, path + ": not a binary PPM (magic '" + magic + "')");
  RgbImage img;
  img.width = parse_header_int(in, path, "width");
  img.height = parse_header_int(in, path, "height");
  img.maxval = parse_header_int(in, path, "maxval");
  require(img.width > 0 && img.height > 0, ErrorKind::metadata, path + ": bad dimensions");
  require(img.maxval > 0 && img.maxval < 65536, ErrorKind::metadata, path + ": bad maxval");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  read_samples(in, path, img.maxval, img.pixels);
  return img;
}

void write_ppm(const std::string& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open for writing: " + path);
  out << "P6\n" << image.width << " " << image.height << "\n" << image.maxval << "\n";
  write_samples(out, image.maxval, image.pixels);
  if (!out) fail(ErrorKind::io, "write failed: " + path);
}

void write_pfm(const std::string& path, const Tensor& image) {
  require(image.ndim() == 3, ErrorKind::dimension, "pfm tensor must be (C,H,W)");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  require(c == 1 || c == 3, ErrorKind::dimension, "pfm supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open for writing: " + path);
  out << (c == 1 ? "Pf" : "PF") << "\n" << w << " " << h << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(w) * c);
  for (int y = h - 1; y >= 0; --y) {  // bottom-up scanline order
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        row[static_cast<std::size_t>(x) * c + ch] =
            static_cast<float>(image[(static_cast<std::size_t>(ch) * h + y) * w + x]);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) fail(ErrorKind::io, "write failed: " + path);
}

Tensor gray_to_tensor(const GrayImage& image) {
  Tensor t({image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i];
  return t;
}

GrayImage tensor_to_gray(const Tensor& t, int maxval) {
  require(t.ndim() == 2, ErrorKind::dimension, "expected (H,W) tensor");
  GrayImage img;
  img.height = t.dim(0);
  img.width = t.dim(1);
  img.maxval = maxval;
  img.pixels.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = std::clamp(std::round(t[i]), 0.0, static_cast<double>(maxval));
    img.pixels[i] = static_cast<std::uint16_t>(v);
  }
  return img;
}

Tensor rgb_to_tensor(const RgbImage& image) {
  Tensor t({3, image.height, image.width});
  const double scale = 1.0 / image.maxval;
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) t[static_cast<std::size_t>(c) * plane + i] = image.pixels[3 * i + c] * scale;
  }
  return t;
}

RgbImage tensor_to_rgb(const Tensor& t, int maxval) {
  require(t.ndim() == 3 && t.dim(0) == 3, ErrorKind::dimension, "expected (3,H,W) tensor");
  RgbImage img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.maxval = maxval;
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  img.pixels.resize(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v =
          std::clamp(std::round(t[static_cast<std::size_t>(c) * plane + i] * maxval), 0.0,
                     static_cast<double>(maxval));
      img.pixels[3 * i + c] = static_cast<std::uint16_t>(v);
    }
  }
  return img;
}

}  // namespace rvd
