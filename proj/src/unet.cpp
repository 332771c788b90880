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

#include "rvdlab/unet.hpp"

#include <algorithm>

namespace rvd {

namespace {
constexpr double kSlope = 0.1;
}

KvRecords UNetSpec::to_records() const {
  KvRecords r;
  r.emplace_back("in_channels", std::to_string(in_channels));
  r.emplace_back("out_channels", std::to_string(out_channels));
  r.emplace_back("depth", std::to_string(depth));
  r.emplace_back("base_channels", std::to_string(base_channels));
  r.emplace_back("max_channels", std::to_string(max_channels));
  r.emplace_back("residual", residual ? "1" : "0");
  r.emplace_back("upscale", std::to_string(upscale));
  return r;
}

UNetSpec UNetSpec::from_records(const KvRecords& records) {
  UNetSpec s;
  s.in_channels = static_cast<int>(parse_long(require_value(records, "in_channels")));
  s.out_channels = static_cast<int>(parse_long(require_value(records, "out_channels")));
  s.depth = static_cast<int>(parse_long(require_value(records, "depth")));
  s.base_channels = static_cast<int>(parse_long(require_value(records, "base_channels")));
  s.max_channels = static_cast<int>(parse_long(require_value(records, "max_channels")));
  s.residual = parse_long(require_value(records, "residual")) != 0;
  s.upscale = static_cast<int>(parse_long(require_value(records, "upscale")));
  s.validate();
  return s;
}

void UNetSpec::validate() const {
  require(depth >= 1, ErrorKind::configuration, "encoder depth must be at least 1");
  require(in_channels > 0 && out_channels > 0 && base_channels > 0 && max_channels > 0,
          ErrorKind::configuration, "channel counts must be positive");
  require(upscale == 1 || upscale == 2, ErrorKind::configuration, "upscale must be 1 or 2");
  require(!residual || (in_channels == out_channels && upscale == 1), ErrorKind::configuration,
          "residual head requires matching channel counts and no upscale");
}

int UNetSpec::level_channels(int level) const {
  long long ch = base_channels;
  for (int i = 0; i < level; ++i) ch = std::min<long long>(ch * 2, max_channels);
  return static_cast<int>(ch);
}

UNet::UNet(const UNetSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  const int c0 = spec_.level_channels(0);
  stem1_ = Conv2dLayer(spec_.in_channels, c0, 3, 1, 1, InitKind::he_normal, rng);
  stem2_ = Conv2dLayer(c0, c0, 3, 1, 1, InitKind::he_normal, rng);
  for (int l = 1; l <= spec_.depth; ++l) {
    const int ci = spec_.level_channels(l - 1);
    const int co = spec_.level_channels(l);
    down_.emplace_back(ci, co, 3, 2, 1, InitKind::he_normal, rng);
    down_post_.emplace_back(co, co, 3, 1, 1, InitKind::he_normal, rng);
  }
  for (int l = spec_.depth; l >= 1; --l) {
    const int coarse = spec_.level_channels(l);
    const int fine = spec_.level_channels(l - 1);
    up_merge_.emplace_back(coarse + fine, fine, 3, 1, 1, InitKind::he_normal, rng);
    up_post_.emplace_back(fine, fine, 3, 1, 1, InitKind::he_normal, rng);
  }
  const int head_out = spec_.out_channels * spec_.upscale * spec_.upscale;
  head_ = Conv2dLayer(spec_.level_channels(0), head_out, 3, 1, 1,
                      spec_.residual ? InitKind::zero : InitKind::he_normal, rng);
}

Var UNet::forward(Tape& tape, const Var& x) const {
  require(x->value.ndim() == 4, ErrorKind::dimension, "network input must be (B,C,H,W)");
  require(x->value.dim(1) == spec_.in_channels, ErrorKind::dimension,
          "network input has wrong channel count");
  const int div = 1 << spec_.depth;
  require(x->value.dim(2) % div == 0 && x->value.dim(3) % div == 0, ErrorKind::dimension,
          "network input dims must be divisible by " + std::to_string(div));

  Var h = leaky_relu(tape, stem1_.forward(tape, x), kSlope);
  h = leaky_relu(tape, stem2_.forward(tape, h), kSlope);
  std::vector<Var> skips;
  for (int l = 0; l < spec_.depth; ++l) {
    skips.push_back(h);
    h = leaky_relu(tape, down_[static_cast<std::size_t>(l)].forward(tape, h), kSlope);
    h = leaky_relu(tape, down_post_[static_cast<std::size_t>(l)].forward(tape, h), kSlope);
  }
  for (int i = 0; i < spec_.depth; ++i) {
    Var up = upsample2x(tape, h);
    Var cat = concat_channels(tape, {up, skips[skips.size() - 1 - static_cast<std::size_t>(i)]});
    h = leaky_relu(tape, up_merge_[static_cast<std::size_t>(i)].forward(tape, cat), kSlope);
    h = leaky_relu(tape, up_post_[static_cast<std::size_t>(i)].forward(tape, h), kSlope);
  }
  Var out = head_.forward(tape, h);
  if (spec_.upscale == 2) out = depth_to_space(tape, out, 2);
  if (spec_.residual) out = add(tape, x, out);
  return out;
}

void UNet::collect(const std::string& prefix, std::vector<Param*>& out) {
  stem1_.collect(prefix + ".stem1", out);
  stem2_.collect(prefix + ".stem2", out);
  for (std::size_t i = 0; i < down_.size(); ++i) {
    down_[i].collect(prefix + ".down" + std::to_string(i), out);
    down_post_[i].collect(prefix + ".down_post" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < up_merge_.size(); ++i) {
    up_merge_[i].collect(prefix + ".up_merge" + std::to_string(i), out);
    up_post_[i].collect(prefix + ".up_post" + std::to_string(i), out);
  }
  head_.collect(prefix + ".head", out);
  return;
}

}  // namespace rvd
