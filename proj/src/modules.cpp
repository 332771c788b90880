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

#include "rvdlab/modules.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "rvdlab/deform_conv.hpp"

namespace rvd {

namespace {

constexpr double kLeakySlope = 0.1;

Var param_leaf(Tape& tape, Param& p) {
  if (!p.grad.defined()) p.grad = Tensor(p.value.shape());
  return tape.leaf_shared_grad(p.value, p.grad, !p.frozen);
}

}  // namespace

Param make_conv_param(std::vector<int> shape, InitKind init, Rng& rng) {
  Param p;
  p.value = Tensor(shape);
  if (init == InitKind::he_normal) {
    // Fan-in over every dimension past the first (output-channel) one.
    long long fan_in = 1;
    for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
    const double stddev =
        std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * static_cast<double>(fan_in)));
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = rng.normal(0.0, stddev);
  }
  p.grad = Tensor(shape);
  return p;
}

Conv2dLayer::Conv2dLayer(int c_in, int c_out, int k, int stride, int pad, InitKind init,
                         Rng& rng, bool with_bias)
    : stride_(stride), pad_(pad), with_bias_(with_bias) {
  weight_ = make_conv_param({c_out, c_in, k, k}, init, rng);
  if (with_bias_) bias_ = make_conv_param({c_out}, InitKind::zero, rng);
}

Var Conv2dLayer::forward(Tape& tape, const Var& x) const {
  Var w = param_leaf(tape, weight_);
  Var b = with_bias_ ? param_leaf(tape, bias_) : nullptr;
  return conv2d(tape, x, w, b, stride_, pad_);
}

void Conv2dLayer::collect(const std::string& prefix, std::vector<Param*>& out) {
  weight_.name = prefix + ".w";
  out.push_back(&weight_);
  if (with_bias_) {
    bias_.name = prefix + ".b";
    out.push_back(&bias_);
  }
}

DeformConvLayer::DeformConvLayer(int c_in, int c_out, int k, InitKind init, Rng& rng) : k_(k) {
  weight_ = make_conv_param({c_out, c_in, k, k}, init, rng);
  bias_ = make_conv_param({c_out}, InitKind::zero, rng);
}

Var DeformConvLayer::forward(Tape& tape, const Var& x, const Var& offsets,
                             const Var& modulation) const {
  Var w = param_leaf(tape, weight_);
  Var b = param_leaf(tape, bias_);
  return deform_conv2d(tape, x, offsets, modulation, w, b);
}

void DeformConvLayer::collect(const std::string& prefix, std::vector<Param*>& out) {
  weight_.name = prefix + ".w";
  bias_.name = prefix + ".b";
  out.push_back(&weight_);
  out.push_back(&bias_);
}

ResBlock::ResBlock(int channels, Rng& rng)
    : c1_(channels, channels, 3, 1, 1, InitKind::he_normal, rng),
      c2_(channels, channels, 3, 1, 1, InitKind::he_normal, rng) {}

Var ResBlock::forward(Tape& tape, const Var& x) const {
  Var h = leaky_relu(tape, c1_.forward(tape, x), kLeakySlope);
  return add(tape, x, c2_.forward(tape, h));
}

void ResBlock::collect(const std::string& prefix, std::vector<Param*>& out) {
  c1_.collect(prefix + ".c1", out);
  c2_.collect(prefix + ".c2", out);
}

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  require(lr_ > 0.0, ErrorKind::parameter, "learning rate must be positive");
  for (Param* p : params_) {
    if (!p->grad.defined()) p->grad = Tensor(p->value.shape());
    if (!p->adam_m.defined()) p->adam_m = Tensor(p->value.shape());
    if (!p->adam_v.defined()) p->adam_v = Tensor(p->value.shape());
  }
}

void Adam::add_lr_override(const std::string& prefix, double lr) {
  require(lr > 0.0, ErrorKind::parameter, "learning rate must be positive");
  overrides_.emplace_back(prefix, lr);
}

double Adam::lr_for(const std::string& name) const {
  double lr = lr_;
  std::size_t best = 0;
  for (const auto& [prefix, value] : overrides_) {
    if (name.compare(0, prefix.size(), prefix) == 0 && prefix.size() >= best) {
      best = prefix.size();
      lr = value;
    }
  }
  return lr;
}

void Adam::zero_grad() {
  for (Param* p : params_) p->grad.fill(0.0);
}

void Adam::set_step_count(long long t) {
  require(t >= 0, ErrorKind::parameter, "optimizer step count must be non-negative");
  t_ = t;
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params_) {
    if (p->frozen) continue;
    const double lr = lr_for(p->name);
    double* value = p->value.data();
    double* grad = p->grad.data();
    double* m = p->adam_m.data();
    double* v = p->adam_v.data();
    const std::size_t n = p->value.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

namespace {

constexpr char kMagic[4] = {'R', 'V', 'D', 'N'};
constexpr std::uint32_t kVersionTag = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(is.good(), ErrorKind::io, "checkpoint truncated");
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(is.good(), ErrorKind::io, "checkpoint truncated");
  return v;
}
std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(is.good(), ErrorKind::io, "checkpoint truncated");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  require(n <= (1u << 20), ErrorKind::io, "checkpoint string length out of range");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  require(is.good() || n == 0, ErrorKind::io, "checkpoint truncated");
  return s;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.ndim()));
  for (int d = 0; d < t.ndim(); ++d) write_u32(os, static_cast<std::uint32_t>(t.dim(d)));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::vector<int> read_tensor_shape(std::istream& is) {
  const std::uint32_t nd = read_u32(is);
  require(nd >= 1 && nd <= 8, ErrorKind::io, "checkpoint tensor rank out of range");
  std::vector<int> shape(nd);
  for (std::uint32_t d = 0; d < nd; ++d) shape[d] = static_cast<int>(read_u32(is));
  return shape;
}

void read_tensor_into(std::istream& is, Tensor& dst, const std::string& name) {
  const std::vector<int> shape = read_tensor_shape(is);
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  require(is.good(), ErrorKind::io, "checkpoint truncated");
  if (dst.defined()) {
    require(dst.shape() == shape, ErrorKind::consistency,
            "checkpoint shape mismatch for parameter " + name);
  }
  dst = t;
}

void check_header(std::istream& is, const std::string& path) {
  char magic[4] = {};
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::io,
          "not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(is);
  require(version == kVersionTag, ErrorKind::io,
          "unsupported checkpoint version " + std::to_string(version));
}

}  // namespace

void save_checkpoint(const std::string& path, const KvRecords& meta,
                     const std::vector<Param*>& params, long long adam_step) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), ErrorKind::io, "cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersionTag);

  std::string meta_text;
  for (const auto& [key, value] : meta) meta_text += key + " " + value + "\n";
  write_string(os, meta_text);

  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    require(!p->name.empty(), ErrorKind::state, "parameter has no name; collect() first");
    write_string(os, p->name);
    write_tensor(os, p->value);
  }

  write_u32(os, adam_step >= 0 ? 1u : 0u);
  if (adam_step >= 0) {
    write_i64(os, adam_step);
    for (const Param* p : params) {
      require(p->adam_m.defined() && p->adam_v.defined(), ErrorKind::state,
              "optimizer state missing for parameter " + p->name);
      write_tensor(os, p->adam_m);
      write_tensor(os, p->adam_v);
    }
  }
  write_u64(os, 0xA11D0E5ull);  // trailer sentinel: full write completed
  require(os.good(), ErrorKind::io, "checkpoint write failed: " + path);
}

KvRecords read_checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::io, "cannot open checkpoint: " + path);
  check_header(is, path);
  return parse_kv_text(read_string(is), path);
}

long long load_checkpoint(const std::string& path, const std::vector<Param*>& params) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::io, "cannot open checkpoint: " + path);
  check_header(is, path);
  (void)read_string(is);  // metadata already consumed by the caller if needed

  const std::uint32_t count = read_u32(is);
  require(count == params.size(), ErrorKind::consistency,
          "checkpoint holds " + std::to_string(count) + " parameters, model expects " +
              std::to_string(params.size()));
  for (Param* p : params) {
    const std::string name = read_string(is);
    require(name == p->name, ErrorKind::consistency,
            "checkpoint parameter order mismatch: stored " + name + ", expected " + p->name);
    read_tensor_into(is, p->value, name);
  }

  const std::uint32_t has_adam = read_u32(is);
  long long adam_step = -1;
  if (has_adam) {
    adam_step = read_i64(is);
    for (Param* p : params) {
      read_tensor_into(is, p->adam_m, p->name + " (moment 1)");
      read_tensor_into(is, p->adam_v, p->name + " (moment 2)");
    }
  }
  const std::uint64_t sentinel = read_u64(is);
  require(sentinel == 0xA11D0E5ull, ErrorKind::io, "checkpoint trailer missing: " + path);
  return adam_step;
}

std::uint64_t params_checksum(const std::vector<Param*>& params) {
  // FNV-1a over the raw bytes of every value tensor, in collection order.
  std::uint64_t h = 1469598103934665603ull;
  auto mix_bytes = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const Param* p : params) {
    mix_bytes(p->name.data(), p->name.size());
    mix_bytes(p->value.data(), p->value.size() * sizeof(double));
  }
  return h;
}

}  // namespace rvd
