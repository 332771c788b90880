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

#include "rvdlab/graph.hpp"
#include "rvdlab/ops.hpp"
#include "rvdlab/rng.hpp"
#include "rvdlab/text_io.hpp"

namespace rvd {

// A named trainable tensor. `grad` persists across tapes and accumulates
// until the optimizer consumes it; `adam_m`/`adam_v` are the optimizer's
// moment buffers and travel with checkpoints.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool frozen = false;
};

// Base for parameterized network pieces. `collect` appends pointers to every
// owned Param and stamps hierarchical names ("prefix.local") onto them so
// checkpoints and learning-rate groups can address parameters by path.
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect(const std::string& prefix, std::vector<Param*>& out) = 0;

  std::vector<Param*> parameters(const std::string& prefix) {
    std::vector<Param*> out;
    collect(prefix, out);
    return out;
  }

  void set_frozen(bool frozen) {
    for (Param* p : parameters("tmp")) p->frozen = frozen;
  }
};

enum class InitKind {
  he_normal,  // variance-preserving fan-in init for leaky-relu stacks
  zero        // identity-at-start residual and predictor heads
};

Param make_conv_param(std::vector<int> shape, InitKind init, Rng& rng);

// Plain 2D convolution layer with optional bias.
class Conv2dLayer : public Module {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(int c_in, int c_out, int k, int stride, int pad, InitKind init, Rng& rng,
              bool with_bias = true);

  Var forward(Tape& tape, const Var& x) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

  int stride() const { return stride_; }

 private:
  mutable Param weight_;
  mutable Param bias_;
  int stride_ = 1;
  int pad_ = 0;
  bool with_bias_ = true;
};

// Modulated deformable convolution layer: the caller supplies the sampling
// offsets and modulation field; this layer owns only the mixing weights.
class DeformConvLayer : public Module {
 public:
  DeformConvLayer() = default;
  DeformConvLayer(int c_in, int c_out, int k, InitKind init, Rng& rng);

  Var forward(Tape& tape, const Var& x, const Var& offsets, const Var& modulation) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

  int kernel() const { return k_; }

 private:
  mutable Param weight_;
  mutable Param bias_;
  int k_ = 3;
};

// conv -> leaky-relu -> conv with an identity shortcut (no final activation).
class ResBlock : public Module {
 public:
  ResBlock() = default;
  ResBlock(int channels, Rng& rng);

  Var forward(Tape& tape, const Var& x) const;
  void collect(const std::string& prefix, std::vector<Param*>& out) override;

 private:
  Conv2dLayer c1_;
  Conv2dLayer c2_;
};

// Adaptive-moment gradient descent with optional per-prefix learning-rate
// overrides (longest matching prefix wins). Frozen parameters are skipped
// entirely: no value update and no moment update.
class Adam {
 public:
  explicit Adam(std::vector<Param*> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  void add_lr_override(const std::string& prefix, double lr);
  void zero_grad();
  void step();

  long long step_count() const { return t_; }
  void set_step_count(long long t);
  double lr_for(const std::string& name) const;

 private:
  std::vector<Param*> params_;
  double lr_;
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::pair<std::string, double>> overrides_;
};

// Checkpoint file: versioned binary with an embedded key=value metadata
// header (architecture descriptor, stage, optimizer name), followed by named
// parameter blobs and, optionally, optimizer moment state.
void save_checkpoint(const std::string& path, const KvRecords& meta,
                     const std::vector<Param*>& params, long long adam_step = -1);

// Reads only the metadata header (to reconstruct the architecture before
// loading parameters into it).
KvRecords read_checkpoint_meta(const std::string& path);

// Loads values (and moment state when present) into `params`, matched by
// name. Returns the stored optimizer step count, or -1 when the checkpoint
// carries no optimizer state.
long long load_checkpoint(const std::string& path, const std::vector<Param*>& params);

// Order- and bit-sensitive digest of parameter values; used to prove frozen
// components do not move during training.
std::uint64_t params_checksum(const std::vector<Param*>& params);

}  // namespace rvd
