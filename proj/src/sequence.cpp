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

#include "rvdlab/sequence.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "rvdlab/image_io.hpp"

namespace fs = std::filesystem;

namespace rvd {

FrameMeta parse_meta(const KvRecords& records, const std::string& origin) {
  FrameMeta meta;
  meta.pattern = parse_pattern(require_value(records, "pattern", origin));
  meta.bit_depth = static_cast<int>(
      parse_long(require_value(records, "bit_depth", origin), origin + ": bit_depth"));
  require(meta.bit_depth >= 8 && meta.bit_depth <= 16, ErrorKind::metadata,
          origin + ": bit_depth must be in [8,16]");
  const double full_scale = static_cast<double>((1 << meta.bit_depth) - 1);
  meta.black_level = 0.0;
  meta.white_level = full_scale;
  std::string value;
  if (find_value(records, "black_level", &value)) {
    meta.black_level = parse_double(value, origin + ": black_level");
  }
  if (find_value(records, "white_level", &value)) {
    meta.white_level = parse_double(value, origin + ": white_level");
  }
  if (find_value(records, "iso", &value)) {
    meta.iso = static_cast<int>(parse_long(value, origin + ": iso"));
  }
  if (find_value(records, "frame_rate", &value)) {
    meta.frame_rate = parse_double(value, origin + ": frame_rate");
  }
  if (find_value(records, "role", &value)) meta.role = value;
  return meta;
}

KvRecords meta_to_records(const FrameMeta& meta) {
  KvRecords records;
  records.emplace_back("pattern", to_string(meta.pattern));
  records.emplace_back("bit_depth", std::to_string(meta.bit_depth));
  records.emplace_back("black_level", format_double(meta.black_level));
  records.emplace_back("white_level", format_double(meta.white_level));
  records.emplace_back("iso", std::to_string(meta.iso));
  records.emplace_back("frame_rate", format_double(meta.frame_rate));
  records.emplace_back("role", meta.role);
  return records;
}

std::string frame_file_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%07d.pgm", index);
  return buf;
}

Sequence load_sequence(const std::string& dir) {
  require(fs::is_directory(dir), ErrorKind::io, "not a directory: " + dir);
  const std::string sidecar = (fs::path(dir) / kSidecarName).string();
  require(fs::exists(sidecar), ErrorKind::metadata, "missing sidecar " + sidecar);

  Sequence seq;
  seq.name = fs::path(dir).filename().string();
  seq.meta = parse_meta(read_kv_file(sidecar), sidecar);

  std::vector<std::pair<int, std::string>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
    const std::string stem = entry.path().stem().string();
    const bool digits =
        !stem.empty() && std::all_of(stem.begin(), stem.end(),
                                     [](char c) { return c >= '0' && c <= '9'; });
    require(digits, ErrorKind::metadata,
            "frame name is not a zero-padded index: " + entry.path().string());
    found.emplace_back(std::stoi(stem), entry.path().string());
  }
  require(!found.empty(), ErrorKind::insufficient_data, "no frames in " + dir);
  std::sort(found.begin(), found.end());
  for (std::size_t i = 1; i < found.size(); ++i) {
    if (found[i].first != found[i - 1].first + 1) {
      fail(ErrorKind::gap, dir + ": frame index jumps from " +
                               std::to_string(found[i - 1].first) + " to " +
                               std::to_string(found[i].first));
    }
  }

  for (const auto& [index, path] : found) {
    (void)index;
    const GrayImage img = read_pgm(path);
    Tensor frame = gray_to_tensor(img);
    if (!seq.frames.empty()) {
      require(frame.same_shape(seq.frames.front()), ErrorKind::consistency,
              path + ": frame size differs from the rest of the sequence");
    }
    require(frame.dim(0) % 2 == 0 && frame.dim(1) % 2 == 0, ErrorKind::dimension,
            path + ": mosaic dims must be even");
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void save_sequence(const std::string& dir, const Sequence& seq) {
  fs::create_directories(dir);
  write_kv_file((fs::path(dir) / kSidecarName).string(), meta_to_records(seq.meta));
  const int maxval = (1 << seq.meta.bit_depth) - 1;
  for (int i = 0; i < seq.frame_count(); ++i) {
    Tensor dn = seq.normalized
                    ? denormalize(seq.frames[static_cast<std::size_t>(i)],
                                  seq.meta.black_level, seq.meta.white_level)
                    : seq.frames[static_cast<std::size_t>(i)];
    // Quantization clips at the container range like a real sensor clips at
    // black/saturation; in-memory pipelines stay unclamped.
    write_pgm((fs::path(dir) / frame_file_name(i)).string(), tensor_to_gray(dn, maxval));
  }
}

void normalize_sequence(Sequence& seq) {
  require(!seq.normalized, ErrorKind::state, "sequence is already normalized");
  require(seq.meta.black_level < seq.meta.white_level, ErrorKind::parameter,
          "black level must be below white level");
  for (auto& frame : seq.frames) {
    BayerFrame f{frame, false};
    normalize_frame(f, seq.meta.black_level, seq.meta.white_level);
    frame = f.mosaic;
  }
  seq.normalized = true;
}

}  // namespace rvd
