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

#include "rvdlab/bayer.hpp"
#include "rvdlab/graph.hpp"

namespace rvd {

// All tensors are NCHW unless stated otherwise. Every op allocates a fresh
// output node on the tape and accumulates gradients into its parents.

// x:(B,Cin,H,W), w:(Cout,Cin,kh,kw), bias:(Cout) or null. Zero padding.
Var conv2d(Tape& tape, const Var& x, const Var& w, const Var& bias, int stride, int pad);

Var add(Tape& tape, const Var& a, const Var& b);
Var sub(Tape& tape, const Var& a, const Var& b);
Var mul(Tape& tape, const Var& a, const Var& b);
Var scale(Tape& tape, const Var& a, double s);
Var add_scalar(Tape& tape, const Var& a, double s);

Var leaky_relu(Tape& tape, const Var& x, double slope);
Var sigmoid(Tape& tape, const Var& x);
Var clamp(Tape& tape, const Var& x, double lo, double hi);

// Bilinear 2x upsample, half-pixel centers, edge-clamped (constant fields
// stay constant). x:(B,C,H,W) -> (B,C,2H,2W).
Var upsample2x(Tape& tape, const Var& x);

Var avg_pool2(Tape& tape, const Var& x);           // 2x2/2 mean, even dims
Var global_avg_pool(Tape& tape, const Var& x);     // (B,C,1,1)
Var global_max_pool(Tape& tape, const Var& x);     // (B,C,1,1)
Var channel_mean(Tape& tape, const Var& x);        // (B,1,H,W)
Var channel_max(Tape& tape, const Var& x);         // (B,1,H,W)

Var concat_channels(Tape& tape, const std::vector<Var>& xs);
Var slice_channels(Tape& tape, const Var& x, int c0, int c1);  // [c0,c1)
Var concat_batch(Tape& tape, const std::vector<Var>& xs);
Var slice_batch(Tape& tape, const Var& x, int b0, int b1);     // [b0,b1)

Var reshape(Tape& tape, const Var& x, std::vector<int> shape);

// x:(B,C,H,W) * g:(B,C,1,1) and x:(B,C,H,W) * m:(B,1,H,W).
Var mul_bcast_channel(Tape& tape, const Var& x, const Var& g);
Var mul_bcast_spatial(Tape& tape, const Var& x, const Var& m);

// Per-pixel dot product over channels: (B,C,H,W)^2 -> (B,1,H,W).
Var dot_channels(Tape& tape, const Var& a, const Var& b);

// Reflection pad (mirror without repeating the edge sample), which keeps the
// CFA phase of mosaics intact because indices reflect to equal parity.
Var reflect_pad(Tape& tape, const Var& x, int pad);
Var crop(Tape& tape, const Var& x, int y0, int x0, int h, int w);

// (B, r*r*C, H, W) -> (B, C, rH, rW); out(c, r*y+dy, r*x+dx) = in(c*r*r + dy*r + dx, y, x).
Var depth_to_space(Tape& tape, const Var& x, int r);

// Differentiable CFA packing: (B,1,2H,2W) <-> (B,4,H,W), canonical plane
// order, same phase tables as the raw pipeline.
Var pack_op(Tape& tape, const Var& mosaic, BayerPattern pattern);
Var unpack_op(Tape& tape, const Var& planes, BayerPattern pattern);

Var sum_all(Tape& tape, const Var& x);   // scalar (1)
Var mean_all(Tape& tape, const Var& x);  // scalar (1)
Var l1_loss(Tape& tape, const Var& a, const Var& b);  // mean |a-b|, scalar

}  // namespace rvd
