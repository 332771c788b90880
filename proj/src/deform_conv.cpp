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

#include "rvdlab/deform_conv.hpp"

#include <Eigen/Core>
#include <cmath>

#include "rvdlab/common.hpp"

namespace rvd {

namespace {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Bilinear read with zero outside [-1, H] x [-1, W]; corners are
// bounds-checked individually so partially-outside samples still blend.
inline double bilinear(const double* plane, int h, int w, double py, double px) {
  if (py <= -1.0 || py >= static_cast<double>(h) || px <= -1.0 ||
      px >= static_cast<double>(w)) {
    return 0.0;
  }
  const int y0 = static_cast<int>(std::floor(py));
  const int x0 = static_cast<int>(std::floor(px));
  const double wy = py - y0;
  const double wx = px - x0;
  auto at = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return plane[static_cast<std::size_t>(y) * w + x];
  };
  const double v00 = at(y0, x0), v01 = at(y0, x0 + 1);
  const double v10 = at(y0 + 1, x0), v11 = at(y0 + 1, x0 + 1);
  return (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
}

struct DcDims {
  int b_n, c_in, h, w, c_out, kh, kw, k_taps;
};

// Deformable patch matrix: rows are (c,i,j) taps, one column per output
// position; entries are modulated bilinear samples.
void deform_im2col(const Tensor& x, const Tensor& offsets, const Tensor& modulation,
                   const DcDims& d, Eigen::MatrixXd& col) {
  const int pad_h = d.kh / 2, pad_w = d.kw / 2;
  const int k_rows = d.c_in * d.k_taps;
  const std::size_t s = static_cast<std::size_t>(d.h) * d.w;
  col.resize(k_rows, static_cast<Eigen::Index>(d.b_n) * static_cast<Eigen::Index>(s));
  for (int b = 0; b < d.b_n; ++b) {
    const double* off_b = offsets.data() + static_cast<std::size_t>(b) * 2 * d.k_taps * s;
    const double* mod_b = modulation.data() + static_cast<std::size_t>(b) * d.k_taps * s;
    const double* x_b = x.data() + static_cast<std::size_t>(b) * d.c_in * s;
    for (int y = 0; y < d.h; ++y) {
      for (int xo = 0; xo < d.w; ++xo) {
        const std::size_t p = static_cast<std::size_t>(y) * d.w + xo;
        double* dst = col.data() + (static_cast<std::size_t>(b) * s + p) * k_rows;
        for (int c = 0; c < d.c_in; ++c) {
          const double* plane = x_b + static_cast<std::size_t>(c) * s;
          for (int k = 0; k < d.k_taps; ++k) {
            const int i = k / d.kw, j = k % d.kw;
            const double py = y - pad_h + i + off_b[(2 * k) * s + p];
            const double px = xo - pad_w + j + off_b[(2 * k + 1) * s + p];
            dst[c * d.k_taps + k] = mod_b[static_cast<std::size_t>(k) * s + p] *
                                    bilinear(plane, d.h, d.w, py, px);
          }
        }
      }
    }
  }
}

}  // namespace

Var deform_conv2d(Tape& tape, const Var& x, const Var& offsets, const Var& modulation,
                  const Var& w, const Var& bias) {
  require(x->value.ndim() == 4 && w->value.ndim() == 4, ErrorKind::dimension,
          "deform_conv2d expects NCHW input and weight");
  DcDims d{};
  d.b_n = x->value.dim(0);
  d.c_in = x->value.dim(1);
  d.h = x->value.dim(2);
  d.w = x->value.dim(3);
  d.c_out = w->value.dim(0);
  d.kh = w->value.dim(2);
  d.kw = w->value.dim(3);
  d.k_taps = d.kh * d.kw;
  require(w->value.dim(1) == d.c_in, ErrorKind::dimension, "deform_conv2d weight channels");
  require(d.kh % 2 == 1 && d.kw % 2 == 1, ErrorKind::dimension,
          "deform_conv2d needs odd kernel dims");
  require(offsets->value.ndim() == 4 && offsets->value.dim(0) == d.b_n &&
              offsets->value.dim(1) == 2 * d.k_taps && offsets->value.dim(2) == d.h &&
              offsets->value.dim(3) == d.w,
          ErrorKind::dimension, "offsets must be (B,2K,H,W)");
  require(modulation->value.ndim() == 4 && modulation->value.dim(0) == d.b_n &&
              modulation->value.dim(1) == d.k_taps && modulation->value.dim(2) == d.h &&
              modulation->value.dim(3) == d.w,
          ErrorKind::dimension, "modulation must be (B,K,H,W)");
  if (bias) {
    require(bias->value.ndim() == 1 && bias->value.dim(0) == d.c_out, ErrorKind::dimension,
            "bias must be (Cout)");
  }

  const int k_rows = d.c_in * d.k_taps;
  const std::size_t s = static_cast<std::size_t>(d.h) * d.w;
  Eigen::MatrixXd col;
  deform_im2col(x->value, offsets->value, modulation->value, d, col);
  Eigen::Map<const RowMajorMat> w_mat(w->value.data(), d.c_out, k_rows);
  Eigen::MatrixXd out_mat = w_mat * col;
  if (bias) {
    Eigen::Map<const Eigen::VectorXd> b_vec(bias->value.data(), d.c_out);
    out_mat.colwise() += b_vec;
  }
  Tensor out({d.b_n, d.c_out, d.h, d.w});
  {
    double* dst = out.data();
    for (int b = 0; b < d.b_n; ++b) {
      for (int c = 0; c < d.c_out; ++c) {
        double* row = dst + (static_cast<std::size_t>(b) * d.c_out + c) * s;
        for (std::size_t i = 0; i < s; ++i) {
          row[i] = out_mat(c, static_cast<Eigen::Index>(b * s + i));
        }
      }
    }
  }

  std::vector<Var> parents = {x, offsets, modulation, w};
  if (bias) parents.push_back(bias);
  Var node = tape.record(std::move(out), std::move(parents), nullptr);
  node->backward = [node, x, offsets, modulation, w, bias, d, k_rows, s]() {
    const int pad_h = d.kh / 2, pad_w = d.kw / 2;
    // Gather dOut as (Cout x B*S).
    Eigen::MatrixXd d_out(d.c_out, static_cast<Eigen::Index>(d.b_n) * static_cast<Eigen::Index>(s));
    {
      const double* g = node->grad.data();
      for (int b = 0; b < d.b_n; ++b) {
        for (int c = 0; c < d.c_out; ++c) {
          const double* row = g + (static_cast<std::size_t>(b) * d.c_out + c) * s;
          for (std::size_t i = 0; i < s; ++i) {
            d_out(c, static_cast<Eigen::Index>(b * s + i)) = row[i];
          }
        }
      }
    }
    Eigen::Map<const RowMajorMat> w_mat(w->value.data(), d.c_out, k_rows);
    if (w->requires_grad) {
      Eigen::MatrixXd col;
      deform_im2col(x->value, offsets->value, modulation->value, d, col);
      Eigen::Map<RowMajorMat> dw(grad_buffer(w).data(), d.c_out, k_rows);
      dw.noalias() += d_out * col.transpose();
    }
    if (bias && bias->requires_grad) {
      Eigen::Map<Eigen::VectorXd> db(grad_buffer(bias).data(), d.c_out);
      db.noalias() += d_out.rowwise().sum();
    }
    const bool need_x = x->requires_grad;
    const bool need_off = offsets->requires_grad;
    const bool need_mod = modulation->requires_grad;
    if (!need_x && !need_off && !need_mod) return;

    Eigen::MatrixXd d_col = w_mat.transpose() * d_out;  // (Cin*K x B*S)
    double* dx = need_x ? grad_buffer(x).data() : nullptr;
    double* doff = need_off ? grad_buffer(offsets).data() : nullptr;
    double* dmod = need_mod ? grad_buffer(modulation).data() : nullptr;
    for (int b = 0; b < d.b_n; ++b) {
      const double* off_b = offsets->value.data() + static_cast<std::size_t>(b) * 2 * d.k_taps * s;
      const double* mod_b = modulation->value.data() + static_cast<std::size_t>(b) * d.k_taps * s;
      const double* x_b = x->value.data() + static_cast<std::size_t>(b) * d.c_in * s;
      double* dx_b = need_x ? dx + static_cast<std::size_t>(b) * d.c_in * s : nullptr;
      double* doff_b = need_off ? doff + static_cast<std::size_t>(b) * 2 * d.k_taps * s : nullptr;
      double* dmod_b = need_mod ? dmod + static_cast<std::size_t>(b) * d.k_taps * s : nullptr;
      for (int y = 0; y < d.h; ++y) {
        for (int xo = 0; xo < d.w; ++xo) {
          const std::size_t p = static_cast<std::size_t>(y) * d.w + xo;
          const double* dcol_p = d_col.data() + (static_cast<std::size_t>(b) * s + p) * k_rows;
          for (int k = 0; k < d.k_taps; ++k) {
            const int i = k / d.kw, j = k % d.kw;
            const double py = y - pad_h + i + off_b[(2 * k) * s + p];
            const double px = xo - pad_w + j + off_b[(2 * k + 1) * s + p];
            const double m = mod_b[static_cast<std::size_t>(k) * s + p];
            if (py <= -1.0 || py >= static_cast<double>(d.h) || px <= -1.0 ||
                px >= static_cast<double>(d.w)) {
              continue;  // fully outside: zero sample, zero gradient
            }
            const int y0 = static_cast<int>(std::floor(py));
            const int x0 = static_cast<int>(std::floor(px));
            const double wy = py - y0;
            const double wx = px - x0;
            const bool y0_in = y0 >= 0 && y0 < d.h;
            const bool y1_in = y0 + 1 >= 0 && y0 + 1 < d.h;
            const bool x0_in = x0 >= 0 && x0 < d.w;
            const bool x1_in = x0 + 1 >= 0 && x0 + 1 < d.w;
            double d_py_k = 0.0, d_px_k = 0.0, d_mod_k = 0.0;
            for (int c = 0; c < d.c_in; ++c) {
              const double gc = dcol_p[c * d.k_taps + k];
              if (gc == 0.0) continue;
              const double* plane = x_b + static_cast<std::size_t>(c) * s;
              const double v00 =
                  (y0_in && x0_in) ? plane[static_cast<std::size_t>(y0) * d.w + x0] : 0.0;
              const double v01 =
                  (y0_in && x1_in) ? plane[static_cast<std::size_t>(y0) * d.w + x0 + 1] : 0.0;
              const double v10 =
                  (y1_in && x0_in) ? plane[static_cast<std::size_t>(y0 + 1) * d.w + x0] : 0.0;
              const double v11 =
                  (y1_in && x1_in) ? plane[static_cast<std::size_t>(y0 + 1) * d.w + x0 + 1] : 0.0;
              if (need_mod || need_off) {
                const double value = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                     wy * ((1 - wx) * v10 + wx * v11);
                d_mod_k += gc * value;
                d_py_k += gc * m * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
                d_px_k += gc * m * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
              }
              if (need_x) {
                const double gm = gc * m;
                double* dplane = dx_b + static_cast<std::size_t>(c) * s;
                if (y0_in && x0_in) {
                  dplane[static_cast<std::size_t>(y0) * d.w + x0] += gm * (1 - wy) * (1 - wx);
                }
                if (y0_in && x1_in) {
                  dplane[static_cast<std::size_t>(y0) * d.w + x0 + 1] += gm * (1 - wy) * wx;
                }
                if (y1_in && x0_in) {
                  dplane[static_cast<std::size_t>(y0 + 1) * d.w + x0] += gm * wy * (1 - wx);
                }
                if (y1_in && x1_in) {
                  dplane[static_cast<std::size_t>(y0 + 1) * d.w + x0 + 1] += gm * wy * wx;
                }
              }
            }
            if (need_off) {
              doff_b[(2 * k) * s + p] += d_py_k;
              doff_b[(2 * k + 1) * s + p] += d_px_k;
            }
            if (need_mod) dmod_b[static_cast<std::size_t>(k) * s + p] += d_mod_k;
          }
        }
      }
    }
  };
  return node;
}

}  // namespace rvd
