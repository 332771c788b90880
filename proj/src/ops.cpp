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

#include "rvdlab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace rvd {

namespace {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check4d(const Var& x, const char* what) {
  require(x->value.ndim() == 4, ErrorKind::dimension, std::string(what) + " expects NCHW");
}

// Patch matrix for convolution: K = Cin*kh*kw rows, one column per output
// position (column-major so each column is contiguous). Rebuilt in backward
// instead of captured — cheaper than holding it for every conv on the tape.
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int h_out, int w_out,
            Eigen::MatrixXd& col) {
  const int b_n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int k_total = c_in * kh * kw;
  col.resize(k_total, static_cast<Eigen::Index>(b_n) * h_out * w_out);
  const double* src = x.data();
  Eigen::Index m = 0;
  for (int b = 0; b < b_n; ++b) {
    const double* xb = src + static_cast<std::size_t>(b) * c_in * h * w;
    for (int oy = 0; oy < h_out; ++oy) {
      for (int ox = 0; ox < w_out; ++ox, ++m) {
        double* dst = col.data() + static_cast<std::size_t>(m) * k_total;
        int k = 0;
        for (int c = 0; c < c_in; ++c) {
          const double* xc = xb + static_cast<std::size_t>(c) * h * w;
          for (int i = 0; i < kh; ++i) {
            const int y = oy * stride - pad + i;
            if (y < 0 || y >= h) {
              for (int j = 0; j < kw; ++j) dst[k++] = 0.0;
              continue;
            }
            const double* row = xc + static_cast<std::size_t>(y) * w;
            for (int j = 0; j < kw; ++j) {
              const int xx = ox * stride - pad + j;
              dst[k++] = (xx >= 0 && xx < w) ? row[xx] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const Eigen::MatrixXd& col, int b_n, int c_in, int h, int w, int kh, int kw,
                int stride, int pad, int h_out, int w_out, double* dx) {
  const int k_total = c_in * kh * kw;
  Eigen::Index m = 0;
  for (int b = 0; b < b_n; ++b) {
    double* xb = dx + static_cast<std::size_t>(b) * c_in * h * w;
    for (int oy = 0; oy < h_out; ++oy) {
      for (int ox = 0; ox < w_out; ++ox, ++m) {
        const double* src = col.data() + static_cast<std::size_t>(m) * k_total;
        int k = 0;
        for (int c = 0; c < c_in; ++c) {
          double* xc = xb + static_cast<std::size_t>(c) * h * w;
          for (int i = 0; i < kh; ++i) {
            const int y = oy * stride - pad + i;
            if (y < 0 || y >= h) {
              k += kw;
              continue;
            }
            double* row = xc + static_cast<std::size_t>(y) * w;
            for (int j = 0; j < kw; ++j, ++k) {
              const int xx = ox * stride - pad + j;
              if (xx >= 0 && xx < w) row[xx] += src[k];
            }
          }
        }
      }
    }
  }
}

// (B,C,Hout,Wout) tensor <-> (C x B*S) matrix with m = b*S + s.
void gather_out_mat(const Tensor& t, Eigen::MatrixXd& mat) {
  const int b_n = t.dim(0), c_n = t.dim(1);
  const std::size_t s = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
  mat.resize(c_n, static_cast<Eigen::Index>(b_n) * static_cast<Eigen::Index>(s));
  const double* src = t.data();
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      const double* row = src + (static_cast<std::size_t>(b) * c_n + c) * s;
      for (std::size_t i = 0; i < s; ++i) {
        mat(c, static_cast<Eigen::Index>(b * s + i)) = row[i];
      }
    }
  }
}

void scatter_out_mat(const Eigen::MatrixXd& mat, Tensor& t) {
  const int b_n = t.dim(0), c_n = t.dim(1);
  const std::size_t s = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
  double* dst = t.data();
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_n; ++c) {
      double* row = dst + (static_cast<std::size_t>(b) * c_n + c) * s;
      for (std::size_t i = 0; i < s; ++i) {
        row[i] = mat(c, static_cast<Eigen::Index>(b * s + i));
      }
    }
  }
}

int reflect_index(int i, int n) {
  // Mirror without repeating the edge: -1 -> 1, n -> n-2. Parity-preserving.
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}

}  // namespace

Var conv2d(Tape& tape, const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  check4d(x, "conv2d input");
  check4d(w, "conv2d weight");
  const int b_n = x->value.dim(0), c_in = x->value.dim(1);
  const int h = x->value.dim(2), wd = x->value.dim(3);
  const int c_out = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  require(w->value.dim(1) == c_in, ErrorKind::dimension,
          "conv2d weight expects " + std::to_string(w->value.dim(1)) + " input channels, got " +
              std::to_string(c_in));
  require(stride >= 1 && pad >= 0, ErrorKind::parameter, "conv2d stride/pad out of range");
  // Floor-division output size: trailing rows/columns that do not fill a full
  // stride step are dropped, matching the usual strided-convolution contract.
  const int h_out = (h + 2 * pad - kh) / stride + 1;
  const int w_out = (wd + 2 * pad - kw) / stride + 1;
  require(h + 2 * pad >= kh && wd + 2 * pad >= kw, ErrorKind::dimension,
          "conv2d kernel larger than padded input");
  if (bias) {
    require(bias->value.ndim() == 1 && bias->value.dim(0) == c_out, ErrorKind::dimension,
            "conv2d bias must be (Cout)");
  }

  const int k_total = c_in * kh * kw;
  Eigen::MatrixXd col;
  im2col(x->value, kh, kw, stride, pad, h_out, w_out, col);
  Eigen::Map<const RowMajorMat> w_mat(w->value.data(), c_out, k_total);
  Eigen::MatrixXd out_mat = w_mat * col;
  if (bias) {
    Eigen::Map<const Eigen::VectorXd> b_vec(bias->value.data(), c_out);
    out_mat.colwise() += b_vec;
  }
  Tensor out({b_n, c_out, h_out, w_out});
  scatter_out_mat(out_mat, out);

  std::vector<Var> parents = {x, w};
  if (bias) parents.push_back(bias);
  Var node = tape.record(std::move(out), std::move(parents), nullptr);
  node->backward = [node, x, w, bias, stride, pad, h_out, w_out]() {
    const int b_n = x->value.dim(0), c_in = x->value.dim(1);
    const int h = x->value.dim(2), wd = x->value.dim(3);
    const int c_out = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    const int k_total = c_in * kh * kw;
    Eigen::MatrixXd d_out;
    gather_out_mat(node->grad, d_out);
    Eigen::Map<const RowMajorMat> w_mat(w->value.data(), c_out, k_total);
    if (w->requires_grad) {
      Eigen::MatrixXd col;
      im2col(x->value, kh, kw, stride, pad, h_out, w_out, col);
      Eigen::Map<RowMajorMat> dw(grad_buffer(w).data(), c_out, k_total);
      dw.noalias() += d_out * col.transpose();
    }
    if (bias && bias->requires_grad) {
      Eigen::Map<Eigen::VectorXd> db(grad_buffer(bias).data(), c_out);
      db.noalias() += d_out.rowwise().sum();
    }
    if (x->requires_grad) {
      Eigen::MatrixXd d_col = w_mat.transpose() * d_out;
      col2im_add(d_col, b_n, c_in, h, wd, kh, kw, stride, pad, h_out, w_out,
                 grad_buffer(x).data());
    }
  };
  return node;
}

Var add(Tape& tape, const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), ErrorKind::dimension, "add shape mismatch");
  Tensor out = a->value.clone();
  double* o = out.data();
  const double* bb = b->value.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += bb[i];
  Var node = tape.record(std::move(out), {a, b}, nullptr);
  node->backward = [node, a, b]() {
    const double* g = node->grad.data();
    const std::size_t n = node->grad.size();
    if (a->requires_grad) {
      double* da = grad_buffer(a).data();
      for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
    }
    if (b->requires_grad) {
      double* db = grad_buffer(b).data();
      for (std::size_t i = 0; i < n; ++i) db[i] += g[i];
    }
  };
  return node;
}

Var sub(Tape& tape, const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), ErrorKind::dimension, "sub shape mismatch");
  Tensor out = a->value.clone();
  double* o = out.data();
  const double* bb = b->value.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] -= bb[i];
  Var node = tape.record(std::move(out), {a, b}, nullptr);
  node->backward = [node, a, b]() {
    const double* g = node->grad.data();
    const std::size_t n = node->grad.size();
    if (a->requires_grad) {
      double* da = grad_buffer(a).data();
      for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
    }
    if (b->requires_grad) {
      double* db = grad_buffer(b).data();
      for (std::size_t i = 0; i < n; ++i) db[i] -= g[i];
    }
  };
  return node;
}

Var mul(Tape& tape, const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), ErrorKind::dimension, "mul shape mismatch");
  Tensor out = a->value.clone();
  double* o = out.data();
  const double* bb = b->value.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] *= bb[i];
  Var node = tape.record(std::move(out), {a, b}, nullptr);
  node->backward = [node, a, b]() {
    const double* g = node->grad.data();
    const std::size_t n = node->grad.size();
    if (a->requires_grad) {
      double* da = grad_buffer(a).data();
      const double* bv = b->value.data();
      for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
    }
    if (b->requires_grad) {
      double* db = grad_buffer(b).data();
      const double* av = a->value.data();
      for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
    }
  };
  return node;
}

Var scale(Tape& tape, const Var& a, double s) {
  Tensor out = a->value.clone();
  double* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] *= s;
  Var node = tape.record(std::move(out), {a}, nullptr);
  node->backward = [node, a, s]() {
    if (!a->requires_grad) return;
    const double* g = node->grad.data();
    double* da = grad_buffer(a).data();
    for (std::size_t i = 0; i < node->grad.size(); ++i) da[i] += g[i] * s;
  };
  return node;
}

Var add_scalar(Tape& tape, const Var& a, double s) {
  Tensor out = a->value.clone();
  double* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += s;
  Var node = tape.record(std::move(out), {a}, nullptr);
  node->backward = [node, a]() {
    if (!a->requires_grad) return;
    const double* g = node->grad.data();
    double* da = grad_buffer(a).data();
    for (std::size_t i = 0; i < node->grad.size(); ++i) da[i] += g[i];
  };
  return node;
}

Var leaky_relu(Tape& tape, const Var& x, double slope) {
  Tensor out = x->value.clone();
  double* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (o[i] < 0.0) o[i] *= slope;
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, slope]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    const double* xv = x->value.data();
    double* dx = grad_buffer(x).data();
    for (std::size_t i = 0; i < node->grad.size(); ++i) {
      dx[i] += g[i] * (xv[i] >= 0.0 ? 1.0 : slope);
    }
  };
  return node;
}

Var sigmoid(Tape& tape, const Var& x) {
  Tensor out = x->value.clone();
  double* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = 1.0 / (1.0 + std::exp(-o[i]));
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    const double* y = node->value.data();
    double* dx = grad_buffer(x).data();
    for (std::size_t i = 0; i < node->grad.size(); ++i) {
      dx[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  };
  return node;
}

Var clamp(Tape& tape, const Var& x, double lo, double hi) {
  require(lo < hi, ErrorKind::parameter, "clamp bounds out of order");
  Tensor out = x->value.clone();
  double* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = std::clamp(o[i], lo, hi);
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, lo, hi]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    const double* xv = x->value.data();
    double* dx = grad_buffer(x).data();
    for (std::size_t i = 0; i < node->grad.size(); ++i) {
      if (xv[i] > lo && xv[i] < hi) dx[i] += g[i];
    }
  };
  return node;
}

Var upsample2x(Tape& tape, const Var& x) {
  check4d(x, "upsample2x");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const int h = x->value.dim(2), w = x->value.dim(3);
  const int oh = 2 * h, ow = 2 * w;
  Tensor out({b_n, c_n, oh, ow});
  const double* src = x->value.data();
  double* dst = out.data();
  for (int bc = 0; bc < b_n * c_n; ++bc) {
    const double* in_plane = src + static_cast<std::size_t>(bc) * h * w;
    double* out_plane = dst + static_cast<std::size_t>(bc) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const double sy = 0.5 * y - 0.25;
      const int y0f = static_cast<int>(std::floor(sy));
      const double wy = sy - y0f;
      const int y0 = std::clamp(y0f, 0, h - 1);
      const int y1 = std::clamp(y0f + 1, 0, h - 1);
      for (int xo = 0; xo < ow; ++xo) {
        const double sx = 0.5 * xo - 0.25;
        const int x0f = static_cast<int>(std::floor(sx));
        const double wx = sx - x0f;
        const int x0 = std::clamp(x0f, 0, w - 1);
        const int x1 = std::clamp(x0f + 1, 0, w - 1);
        out_plane[static_cast<std::size_t>(y) * ow + xo] =
            (1 - wy) * ((1 - wx) * in_plane[static_cast<std::size_t>(y0) * w + x0] +
                        wx * in_plane[static_cast<std::size_t>(y0) * w + x1]) +
            wy * ((1 - wx) * in_plane[static_cast<std::size_t>(y1) * w + x0] +
                  wx * in_plane[static_cast<std::size_t>(y1) * w + x1]);
      }
    }
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b_n, c_n, h, w, oh, ow]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (int bc = 0; bc < b_n * c_n; ++bc) {
      double* dx_plane = dx + static_cast<std::size_t>(bc) * h * w;
      const double* g_plane = g + static_cast<std::size_t>(bc) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const double sy = 0.5 * y - 0.25;
        const int y0f = static_cast<int>(std::floor(sy));
        const double wy = sy - y0f;
        const int y0 = std::clamp(y0f, 0, h - 1);
        const int y1 = std::clamp(y0f + 1, 0, h - 1);
        for (int xo = 0; xo < ow; ++xo) {
          const double sx = 0.5 * xo - 0.25;
          const int x0f = static_cast<int>(std::floor(sx));
          const double wx = sx - x0f;
          const int x0 = std::clamp(x0f, 0, w - 1);
          const int x1 = std::clamp(x0f + 1, 0, w - 1);
          const double gv = g_plane[static_cast<std::size_t>(y) * ow + xo];
          dx_plane[static_cast<std::size_t>(y0) * w + x0] += (1 - wy) * (1 - wx) * gv;
          dx_plane[static_cast<std::size_t>(y0) * w + x1] += (1 - wy) * wx * gv;
          dx_plane[static_cast<std::size_t>(y1) * w + x0] += wy * (1 - wx) * gv;
          dx_plane[static_cast<std::size_t>(y1) * w + x1] += wy * wx * gv;
        }
      }
    }
  };
  return node;
}

Var avg_pool2(Tape& tape, const Var& x) {
  check4d(x, "avg_pool2");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const int h = x->value.dim(2), w = x->value.dim(3);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::dimension, "avg_pool2 needs even dims");
  const int oh = h / 2, ow = w / 2;
  Tensor out({b_n, c_n, oh, ow});
  const double* src = x->value.data();
  double* dst = out.data();
  for (int bc = 0; bc < b_n * c_n; ++bc) {
    const double* in_plane = src + static_cast<std::size_t>(bc) * h * w;
    double* out_plane = dst + static_cast<std::size_t>(bc) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xo = 0; xo < ow; ++xo) {
        const double* p = in_plane + static_cast<std::size_t>(2 * y) * w + 2 * xo;
        out_plane[static_cast<std::size_t>(y) * ow + xo] =
            0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
    }
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b_n, c_n, h, w, oh, ow]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (int bc = 0; bc < b_n * c_n; ++bc) {
      double* dx_plane = dx + static_cast<std::size_t>(bc) * h * w;
      const double* g_plane = g + static_cast<std::size_t>(bc) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        for (int xo = 0; xo < ow; ++xo) {
          const double gv = 0.25 * g_plane[static_cast<std::size_t>(y) * ow + xo];
          double* p = dx_plane + static_cast<std::size_t>(2 * y) * w + 2 * xo;
          p[0] += gv;
          p[1] += gv;
          p[w] += gv;
          p[w + 1] += gv;
        }
      }
    }
  };
  return node;
}

Var global_avg_pool(Tape& tape, const Var& x) {
  check4d(x, "global_avg_pool");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const std::size_t s = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
  Tensor out({b_n, c_n, 1, 1});
  const double* src = x->value.data();
  for (int bc = 0; bc < b_n * c_n; ++bc) {
    double acc = 0.0;
    const double* p = src + static_cast<std::size_t>(bc) * s;
    for (std::size_t i = 0; i < s; ++i) acc += p[i];
    out[static_cast<std::size_t>(bc)] = acc / static_cast<double>(s);
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b_n, c_n, s]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    const double inv = 1.0 / static_cast<double>(s);
    for (int bc = 0; bc < b_n * c_n; ++bc) {
      const double gv = g[static_cast<std::size_t>(bc)] * inv;
      double* p = dx + static_cast<std::size_t>(bc) * s;
      for (std::size_t i = 0; i < s; ++i) p[i] += gv;
    }
  };
  return node;
}

Var global_max_pool(Tape& tape, const Var& x) {
  check4d(x, "global_max_pool");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const std::size_t s = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
  Tensor out({b_n, c_n, 1, 1});
  auto argmax = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(b_n) * c_n);
  const double* src = x->value.data();
  for (int bc = 0; bc < b_n * c_n; ++bc) {
    const double* p = src + static_cast<std::size_t>(bc) * s;
    std::size_t best = 0;
    for (std::size_t i = 1; i < s; ++i) {
      if (p[i] > p[best]) best = i;
    }
    (*argmax)[static_cast<std::size_t>(bc)] = best;
    out[static_cast<std::size_t>(bc)] = p[best];
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, argmax, s]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (std::size_t bc = 0; bc < argmax->size(); ++bc) {
      dx[bc * s + (*argmax)[bc]] += g[bc];
    }
  };
  return node;
}

Var channel_mean(Tape& tape, const Var& x) {
  check4d(x, "channel_mean");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const std::size_t s = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
  Tensor out({b_n, 1, x->value.dim(2), x->value.dim(3)});
  const double* src = x->value.data();
  double* dst = out.data();
  const double inv = 1.0 / c_n;
  for (int b = 0; b < b_n; ++b) {
    double* ob = dst + static_cast<std::size_t>(b) * s;
    const double* xb = src + static_cast<std::size_t>(b) * c_n * s;
    for (std::size_t i = 0; i < s; ++i) {
      double acc = 0.0;
      for (int c = 0; c < c_n; ++c) acc += xb[static_cast<std::size_t>(c) * s + i];
      ob[i] = acc * inv;
    }
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b_n, c_n, s, inv]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (int b = 0; b < b_n; ++b) {
      const double* gb = g + static_cast<std::size_t>(b) * s;
      double* xb = dx + static_cast<std::size_t>(b) * c_n * s;
      for (int c = 0; c < c_n; ++c) {
        double* xc = xb + static_cast<std::size_t>(c) * s;
        for (std::size_t i = 0; i < s; ++i) xc[i] += gb[i] * inv;
      }
    }
  };
  return node;
}

Var channel_max(Tape& tape, const Var& x) {
  check4d(x, "channel_max");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const std::size_t s = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
  Tensor out({b_n, 1, x->value.dim(2), x->value.dim(3)});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(b_n) * s);
  const double* src = x->value.data();
  double* dst = out.data();
  for (int b = 0; b < b_n; ++b) {
    double* ob = dst + static_cast<std::size_t>(b) * s;
    const double* xb = src + static_cast<std::size_t>(b) * c_n * s;
    for (std::size_t i = 0; i < s; ++i) {
      int best = 0;
      for (int c = 1; c < c_n; ++c) {
        if (xb[static_cast<std::size_t>(c) * s + i] > xb[static_cast<std::size_t>(best) * s + i]) {
          best = c;
        }
      }
      (*argmax)[static_cast<std::size_t>(b) * s + i] = best;
      ob[i] = xb[static_cast<std::size_t>(best) * s + i];
    }
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, argmax, b_n, c_n, s]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (int b = 0; b < b_n; ++b) {
      const double* gb = g + static_cast<std::size_t>(b) * s;
      double* xb = dx + static_cast<std::size_t>(b) * c_n * s;
      for (std::size_t i = 0; i < s; ++i) {
        const int c = (*argmax)[static_cast<std::size_t>(b) * s + i];
        xb[static_cast<std::size_t>(c) * s + i] += gb[i];
      }
    }
  };
  return node;
}

Var concat_channels(Tape& tape, const std::vector<Var>& xs) {
  require(!xs.empty(), ErrorKind::dimension, "concat_channels needs inputs");
  check4d(xs[0], "concat_channels");
  const int b_n = xs[0]->value.dim(0), h = xs[0]->value.dim(2), w = xs[0]->value.dim(3);
  int c_total = 0;
  for (const auto& v : xs) {
    check4d(v, "concat_channels");
    require(v->value.dim(0) == b_n && v->value.dim(2) == h && v->value.dim(3) == w,
            ErrorKind::dimension, "concat_channels shape mismatch");
    c_total += v->value.dim(1);
  }
  const std::size_t s = static_cast<std::size_t>(h) * w;
  Tensor out({b_n, c_total, h, w});
  double* dst = out.data();
  for (int b = 0; b < b_n; ++b) {
    int c_off = 0;
    for (const auto& v : xs) {
      const int c_n = v->value.dim(1);
      std::memcpy(dst + (static_cast<std::size_t>(b) * c_total + c_off) * s,
                  v->value.data() + static_cast<std::size_t>(b) * c_n * s,
                  static_cast<std::size_t>(c_n) * s * sizeof(double));
      c_off += c_n;
    }
  }
  Var node = tape.record(std::move(out), xs, nullptr);
  node->backward = [node, xs, b_n, c_total, s]() {
    const double* g = node->grad.data();
    for (int b = 0; b < b_n; ++b) {
      int c_off = 0;
      for (const auto& v : xs) {
        const int c_n = v->value.dim(1);
        if (v->requires_grad) {
          double* dv = grad_buffer(v).data() + static_cast<std::size_t>(b) * c_n * s;
          const double* gs = g + (static_cast<std::size_t>(b) * c_total + c_off) * s;
          for (std::size_t i = 0; i < static_cast<std::size_t>(c_n) * s; ++i) dv[i] += gs[i];
        }
        c_off += c_n;
      }
    }
  };
  return node;
}

Var slice_channels(Tape& tape, const Var& x, int c0, int c1) {
  check4d(x, "slice_channels");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const int h = x->value.dim(2), w = x->value.dim(3);
  require(0 <= c0 && c0 < c1 && c1 <= c_n, ErrorKind::dimension, "slice_channels range");
  const std::size_t s = static_cast<std::size_t>(h) * w;
  const int c_len = c1 - c0;
  Tensor out({b_n, c_len, h, w});
  for (int b = 0; b < b_n; ++b) {
    std::memcpy(out.data() + static_cast<std::size_t>(b) * c_len * s,
                x->value.data() + (static_cast<std::size_t>(b) * c_n + c0) * s,
                static_cast<std::size_t>(c_len) * s * sizeof(double));
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b_n, c_n, c0, c_len, s]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (int b = 0; b < b_n; ++b) {
      double* d = dx + (static_cast<std::size_t>(b) * c_n + c0) * s;
      const double* gs = g + static_cast<std::size_t>(b) * c_len * s;
      for (std::size_t i = 0; i < static_cast<std::size_t>(c_len) * s; ++i) d[i] += gs[i];
    }
  };
  return node;
}

Var concat_batch(Tape& tape, const std::vector<Var>& xs) {
  require(!xs.empty(), ErrorKind::dimension, "concat_batch needs inputs");
  check4d(xs[0], "concat_batch");
  const int c_n = xs[0]->value.dim(1), h = xs[0]->value.dim(2), w = xs[0]->value.dim(3);
  int b_total = 0;
  for (const auto& v : xs) {
    check4d(v, "concat_batch");
    require(v->value.dim(1) == c_n && v->value.dim(2) == h && v->value.dim(3) == w,
            ErrorKind::dimension, "concat_batch shape mismatch");
    b_total += v->value.dim(0);
  }
  const std::size_t item = static_cast<std::size_t>(c_n) * h * w;
  Tensor out({b_total, c_n, h, w});
  std::size_t off = 0;
  for (const auto& v : xs) {
    std::memcpy(out.data() + off, v->value.data(), v->value.size() * sizeof(double));
    off += v->value.size();
  }
  Var node = tape.record(std::move(out), xs, nullptr);
  node->backward = [node, xs, item]() {
    (void)item;
    const double* g = node->grad.data();
    std::size_t off = 0;
    for (const auto& v : xs) {
      if (v->requires_grad) {
        double* dv = grad_buffer(v).data();
        for (std::size_t i = 0; i < v->value.size(); ++i) dv[i] += g[off + i];
      }
      off += v->value.size();
    }
  };
  return node;
}

Var slice_batch(Tape& tape, const Var& x, int b0, int b1) {
  check4d(x, "slice_batch");
  const int b_n = x->value.dim(0);
  require(0 <= b0 && b0 < b1 && b1 <= b_n, ErrorKind::dimension, "slice_batch range");
  const std::size_t item =
      static_cast<std::size_t>(x->value.dim(1)) * x->value.dim(2) * x->value.dim(3);
  Tensor out({b1 - b0, x->value.dim(1), x->value.dim(2), x->value.dim(3)});
  std::memcpy(out.data(), x->value.data() + static_cast<std::size_t>(b0) * item,
              out.size() * sizeof(double));
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b0, item]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data() + static_cast<std::size_t>(b0) * item;
    for (std::size_t i = 0; i < node->grad.size(); ++i) dx[i] += g[i];
  };
  return node;
}

Var reshape(Tape& tape, const Var& x, std::vector<int> shape) {
  Tensor out = x->value.clone().reshaped(std::move(shape));
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (std::size_t i = 0; i < node->grad.size(); ++i) dx[i] += g[i];
  };
  return node;
}

Var mul_bcast_channel(Tape& tape, const Var& x, const Var& g) {
  check4d(x, "mul_bcast_channel");
  check4d(g, "mul_bcast_channel gate");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  require(g->value.dim(0) == b_n && g->value.dim(1) == c_n && g->value.dim(2) == 1 &&
              g->value.dim(3) == 1,
          ErrorKind::dimension, "gate must be (B,C,1,1)");
  const std::size_t s = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
  Tensor out = x->value.clone();
  double* o = out.data();
  const double* gv = g->value.data();
  for (int bc = 0; bc < b_n * c_n; ++bc) {
    const double k = gv[static_cast<std::size_t>(bc)];
    double* p = o + static_cast<std::size_t>(bc) * s;
    for (std::size_t i = 0; i < s; ++i) p[i] *= k;
  }
  Var node = tape.record(std::move(out), {x, g}, nullptr);
  node->backward = [node, x, g, b_n, c_n, s]() {
    const double* gr = node->grad.data();
    const double* xv = x->value.data();
    const double* gv = g->value.data();
    if (x->requires_grad) {
      double* dx = grad_buffer(x).data();
      for (int bc = 0; bc < b_n * c_n; ++bc) {
        const double k = gv[static_cast<std::size_t>(bc)];
        const double* gp = gr + static_cast<std::size_t>(bc) * s;
        double* dp = dx + static_cast<std::size_t>(bc) * s;
        for (std::size_t i = 0; i < s; ++i) dp[i] += gp[i] * k;
      }
    }
    if (g->requires_grad) {
      double* dg = grad_buffer(g).data();
      for (int bc = 0; bc < b_n * c_n; ++bc) {
        const double* gp = gr + static_cast<std::size_t>(bc) * s;
        const double* xp = xv + static_cast<std::size_t>(bc) * s;
        double acc = 0.0;
        for (std::size_t i = 0; i < s; ++i) acc += gp[i] * xp[i];
        dg[static_cast<std::size_t>(bc)] += acc;
      }
    }
  };
  return node;
}

Var mul_bcast_spatial(Tape& tape, const Var& x, const Var& m) {
  check4d(x, "mul_bcast_spatial");
  check4d(m, "mul_bcast_spatial mask");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const int h = x->value.dim(2), w = x->value.dim(3);
  require(m->value.dim(0) == b_n && m->value.dim(1) == 1 && m->value.dim(2) == h &&
              m->value.dim(3) == w,
          ErrorKind::dimension, "mask must be (B,1,H,W)");
  const std::size_t s = static_cast<std::size_t>(h) * w;
  Tensor out = x->value.clone();
  double* o = out.data();
  const double* mv = m->value.data();
  for (int b = 0; b < b_n; ++b) {
    const double* mb = mv + static_cast<std::size_t>(b) * s;
    for (int c = 0; c < c_n; ++c) {
      double* p = o + (static_cast<std::size_t>(b) * c_n + c) * s;
      for (std::size_t i = 0; i < s; ++i) p[i] *= mb[i];
    }
  }
  Var node = tape.record(std::move(out), {x, m}, nullptr);
  node->backward = [node, x, m, b_n, c_n, s]() {
    const double* gr = node->grad.data();
    const double* xv = x->value.data();
    const double* mv = m->value.data();
    if (x->requires_grad) {
      double* dx = grad_buffer(x).data();
      for (int b = 0; b < b_n; ++b) {
        const double* mb = mv + static_cast<std::size_t>(b) * s;
        for (int c = 0; c < c_n; ++c) {
          const std::size_t off = (static_cast<std::size_t>(b) * c_n + c) * s;
          for (std::size_t i = 0; i < s; ++i) dx[off + i] += gr[off + i] * mb[i];
        }
      }
    }
    if (m->requires_grad) {
      double* dm = grad_buffer(m).data();
      for (int b = 0; b < b_n; ++b) {
        double* db = dm + static_cast<std::size_t>(b) * s;
        for (int c = 0; c < c_n; ++c) {
          const std::size_t off = (static_cast<std::size_t>(b) * c_n + c) * s;
          for (std::size_t i = 0; i < s; ++i) db[i] += gr[off + i] * xv[off + i];
        }
      }
    }
  };
  return node;
}

Var dot_channels(Tape& tape, const Var& a, const Var& b) {
  check4d(a, "dot_channels");
  require(a->value.same_shape(b->value), ErrorKind::dimension, "dot_channels shape mismatch");
  const int b_n = a->value.dim(0), c_n = a->value.dim(1);
  const int h = a->value.dim(2), w = a->value.dim(3);
  const std::size_t s = static_cast<std::size_t>(h) * w;
  Tensor out({b_n, 1, h, w});
  const double* av = a->value.data();
  const double* bv = b->value.data();
  double* o = out.data();
  for (int bi = 0; bi < b_n; ++bi) {
    double* ob = o + static_cast<std::size_t>(bi) * s;
    for (int c = 0; c < c_n; ++c) {
      const std::size_t off = (static_cast<std::size_t>(bi) * c_n + c) * s;
      for (std::size_t i = 0; i < s; ++i) ob[i] += av[off + i] * bv[off + i];
    }
  }
  Var node = tape.record(std::move(out), {a, b}, nullptr);
  node->backward = [node, a, b, b_n, c_n, s]() {
    const double* g = node->grad.data();
    const double* av = a->value.data();
    const double* bv = b->value.data();
    if (a->requires_grad) {
      double* da = grad_buffer(a).data();
      for (int bi = 0; bi < b_n; ++bi) {
        const double* gb = g + static_cast<std::size_t>(bi) * s;
        for (int c = 0; c < c_n; ++c) {
          const std::size_t off = (static_cast<std::size_t>(bi) * c_n + c) * s;
          for (std::size_t i = 0; i < s; ++i) da[off + i] += gb[i] * bv[off + i];
        }
      }
    }
    if (b->requires_grad) {
      double* db = grad_buffer(b).data();
      for (int bi = 0; bi < b_n; ++bi) {
        const double* gb = g + static_cast<std::size_t>(bi) * s;
        for (int c = 0; c < c_n; ++c) {
          const std::size_t off = (static_cast<std::size_t>(bi) * c_n + c) * s;
          for (std::size_t i = 0; i < s; ++i) db[off + i] += gb[i] * av[off + i];
        }
      }
    }
  };
  return node;
}

Var reflect_pad(Tape& tape, const Var& x, int pad) {
  check4d(x, "reflect_pad");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const int h = x->value.dim(2), w = x->value.dim(3);
  require(pad >= 0 && pad < h && pad < w, ErrorKind::dimension,
          "reflect_pad must be smaller than the image");
  const int oh = h + 2 * pad, ow = w + 2 * pad;
  Tensor out({b_n, c_n, oh, ow});
  const double* src = x->value.data();
  double* dst = out.data();
  for (int bc = 0; bc < b_n * c_n; ++bc) {
    const double* in_plane = src + static_cast<std::size_t>(bc) * h * w;
    double* out_plane = dst + static_cast<std::size_t>(bc) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int sy = reflect_index(y - pad, h);
      for (int xo = 0; xo < ow; ++xo) {
        const int sx = reflect_index(xo - pad, w);
        out_plane[static_cast<std::size_t>(y) * ow + xo] =
            in_plane[static_cast<std::size_t>(sy) * w + sx];
      }
    }
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b_n, c_n, h, w, pad, oh, ow]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (int bc = 0; bc < b_n * c_n; ++bc) {
      double* dx_plane = dx + static_cast<std::size_t>(bc) * h * w;
      const double* g_plane = g + static_cast<std::size_t>(bc) * oh * ow;
      for (int y = 0; y < oh; ++y) {
        const int sy = reflect_index(y - pad, h);
        for (int xo = 0; xo < ow; ++xo) {
          const int sx = reflect_index(xo - pad, w);
          dx_plane[static_cast<std::size_t>(sy) * w + sx] +=
              g_plane[static_cast<std::size_t>(y) * ow + xo];
        }
      }
    }
  };
  return node;
}

Var crop(Tape& tape, const Var& x, int y0, int x0, int h, int w) {
  check4d(x, "crop");
  const int b_n = x->value.dim(0), c_n = x->value.dim(1);
  const int ih = x->value.dim(2), iw = x->value.dim(3);
  require(y0 >= 0 && x0 >= 0 && y0 + h <= ih && x0 + w <= iw && h > 0 && w > 0,
          ErrorKind::dimension, "crop outside input");
  Tensor out({b_n, c_n, h, w});
  const double* src = x->value.data();
  double* dst = out.data();
  for (int bc = 0; bc < b_n * c_n; ++bc) {
    const double* in_plane = src + static_cast<std::size_t>(bc) * ih * iw;
    double* out_plane = dst + static_cast<std::size_t>(bc) * h * w;
    for (int y = 0; y < h; ++y) {
      std::memcpy(out_plane + static_cast<std::size_t>(y) * w,
                  in_plane + static_cast<std::size_t>(y0 + y) * iw + x0,
                  static_cast<std::size_t>(w) * sizeof(double));
    }
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b_n, c_n, ih, iw, y0, x0, h, w]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (int bc = 0; bc < b_n * c_n; ++bc) {
      double* dx_plane = dx + static_cast<std::size_t>(bc) * ih * iw;
      const double* g_plane = g + static_cast<std::size_t>(bc) * h * w;
      for (int y = 0; y < h; ++y) {
        double* d = dx_plane + static_cast<std::size_t>(y0 + y) * iw + x0;
        const double* gs = g_plane + static_cast<std::size_t>(y) * w;
        for (int xi = 0; xi < w; ++xi) d[xi] += gs[xi];
      }
    }
  };
  return node;
}

Var depth_to_space(Tape& tape, const Var& x, int r) {
  check4d(x, "depth_to_space");
  const int b_n = x->value.dim(0), c_in = x->value.dim(1);
  const int h = x->value.dim(2), w = x->value.dim(3);
  require(r >= 2 && c_in % (r * r) == 0, ErrorKind::dimension,
          "depth_to_space channels must divide r^2");
  const int c_out = c_in / (r * r);
  const int oh = r * h, ow = r * w;
  Tensor out({b_n, c_out, oh, ow});
  const double* src = x->value.data();
  double* dst = out.data();
  for (int b = 0; b < b_n; ++b) {
    for (int c = 0; c < c_out; ++c) {
      double* out_plane = dst + (static_cast<std::size_t>(b) * c_out + c) * oh * ow;
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < r; ++dx) {
          const int ci = c * r * r + dy * r + dx;
          const double* in_plane = src + (static_cast<std::size_t>(b) * c_in + ci) * h * w;
          for (int y = 0; y < h; ++y) {
            for (int xo = 0; xo < w; ++xo) {
              out_plane[static_cast<std::size_t>(r * y + dy) * ow + (r * xo + dx)] =
                  in_plane[static_cast<std::size_t>(y) * w + xo];
            }
          }
        }
      }
    }
  }
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, b_n, c_in, c_out, h, w, r, oh, ow]() {
    if (!x->requires_grad) return;
    const double* g = node->grad.data();
    double* dx = grad_buffer(x).data();
    for (int b = 0; b < b_n; ++b) {
      for (int c = 0; c < c_out; ++c) {
        const double* g_plane = g + (static_cast<std::size_t>(b) * c_out + c) * oh * ow;
        for (int dy = 0; dy < r; ++dy) {
          for (int dxi = 0; dxi < r; ++dxi) {
            const int ci = c * r * r + dy * r + dxi;
            double* dx_plane = dx + (static_cast<std::size_t>(b) * c_in + ci) * h * w;
            for (int y = 0; y < h; ++y) {
              for (int xo = 0; xo < w; ++xo) {
                dx_plane[static_cast<std::size_t>(y) * w + xo] +=
                    g_plane[static_cast<std::size_t>(r * y + dy) * ow + (r * xo + dxi)];
              }
            }
          }
        }
      }
    }
  };
  return node;
}

Var pack_op(Tape& tape, const Var& mosaic, BayerPattern pattern) {
  check4d(mosaic, "pack_op");
  require(mosaic->value.dim(1) == 1, ErrorKind::dimension, "pack_op expects (B,1,2H,2W)");
  const int b_n = mosaic->value.dim(0);
  const int h = mosaic->value.dim(2), w = mosaic->value.dim(3);
  require(h % 2 == 0 && w % 2 == 0, ErrorKind::dimension, "pack_op needs even dims");
  const auto phases = plane_phases(pattern);
  const int ph = h / 2, pw = w / 2;
  Tensor out({b_n, 4, ph, pw});
  const double* src = mosaic->value.data();
  double* dst = out.data();
  for (int b = 0; b < b_n; ++b) {
    const double* mb = src + static_cast<std::size_t>(b) * h * w;
    for (int p = 0; p < 4; ++p) {
      const auto [dy, dx] = phases[static_cast<std::size_t>(p)];
      double* op = dst + (static_cast<std::size_t>(b) * 4 + p) * ph * pw;
      for (int y = 0; y < ph; ++y) {
        const double* row = mb + static_cast<std::size_t>(2 * y + dy) * w + dx;
        for (int xo = 0; xo < pw; ++xo) op[static_cast<std::size_t>(y) * pw + xo] = row[2 * xo];
      }
    }
  }
  Var node = tape.record(std::move(out), {mosaic}, nullptr);
  node->backward = [node, mosaic, phases, b_n, h, w, ph, pw]() {
    if (!mosaic->requires_grad) return;
    const double* g = node->grad.data();
    double* dm = grad_buffer(mosaic).data();
    for (int b = 0; b < b_n; ++b) {
      double* mb = dm + static_cast<std::size_t>(b) * h * w;
      for (int p = 0; p < 4; ++p) {
        const auto [dy, dx] = phases[static_cast<std::size_t>(p)];
        const double* gp = g + (static_cast<std::size_t>(b) * 4 + p) * ph * pw;
        for (int y = 0; y < ph; ++y) {
          double* row = mb + static_cast<std::size_t>(2 * y + dy) * w + dx;
          for (int xo = 0; xo < pw; ++xo) row[2 * xo] += gp[static_cast<std::size_t>(y) * pw + xo];
        }
      }
    }
  };
  return node;
}

Var unpack_op(Tape& tape, const Var& planes, BayerPattern pattern) {
  check4d(planes, "unpack_op");
  require(planes->value.dim(1) == 4, ErrorKind::dimension, "unpack_op expects (B,4,H,W)");
  const int b_n = planes->value.dim(0);
  const int ph = planes->value.dim(2), pw = planes->value.dim(3);
  const auto phases = plane_phases(pattern);
  const int h = 2 * ph, w = 2 * pw;
  Tensor out({b_n, 1, h, w});
  const double* src = planes->value.data();
  double* dst = out.data();
  for (int b = 0; b < b_n; ++b) {
    double* mb = dst + static_cast<std::size_t>(b) * h * w;
    for (int p = 0; p < 4; ++p) {
      const auto [dy, dx] = phases[static_cast<std::size_t>(p)];
      const double* ip = src + (static_cast<std::size_t>(b) * 4 + p) * ph * pw;
      for (int y = 0; y < ph; ++y) {
        double* row = mb + static_cast<std::size_t>(2 * y + dy) * w + dx;
        for (int xo = 0; xo < pw; ++xo) row[2 * xo] = ip[static_cast<std::size_t>(y) * pw + xo];
      }
    }
  }
  Var node = tape.record(std::move(out), {planes}, nullptr);
  node->backward = [node, planes, phases, b_n, h, w, ph, pw]() {
    if (!planes->requires_grad) return;
    const double* g = node->grad.data();
    double* dp = grad_buffer(planes).data();
    for (int b = 0; b < b_n; ++b) {
      const double* gb = g + static_cast<std::size_t>(b) * h * w;
      for (int p = 0; p < 4; ++p) {
        const auto [dy, dx] = phases[static_cast<std::size_t>(p)];
        double* ip = dp + (static_cast<std::size_t>(b) * 4 + p) * ph * pw;
        for (int y = 0; y < ph; ++y) {
          const double* row = gb + static_cast<std::size_t>(2 * y + dy) * w + dx;
          for (int xo = 0; xo < pw; ++xo) ip[static_cast<std::size_t>(y) * pw + xo] += row[2 * xo];
        }
      }
    }
  };
  return node;
}

Var sum_all(Tape& tape, const Var& x) {
  Tensor out({1});
  const double* xv = x->value.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) acc += xv[i];
  out[0] = acc;
  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x]() {
    if (!x->requires_grad) return;
    const double g = node->grad[0];
    double* dx = grad_buffer(x).data();
    for (std::size_t i = 0; i < x->value.size(); ++i) dx[i] += g;
  };
  return node;
}

Var mean_all(Tape& tape, const Var& x) {
  Var s = sum_all(tape, x);
  return scale(tape, s, 1.0 / static_cast<double>(x->value.size()));
}

Var l1_loss(Tape& tape, const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), ErrorKind::dimension, "l1_loss shape mismatch");
  const std::size_t n = a->value.size();
  Tensor out({1});
  const double* av = a->value.data();
  const double* bv = b->value.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(av[i] - bv[i]);
  out[0] = acc / static_cast<double>(n);
  Var node = tape.record(std::move(out), {a, b}, nullptr);
  node->backward = [node, a, b, n]() {
    const double g = node->grad[0] / static_cast<double>(n);
    const double* av = a->value.data();
    const double* bv = b->value.data();
    double* da = a->requires_grad ? grad_buffer(a).data() : nullptr;
    double* db = b->requires_grad ? grad_buffer(b).data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = av[i] - bv[i];
      const double s = (d > 0.0) ? g : (d < 0.0 ? -g : 0.0);
      if (da) da[i] += s;
      if (db) db[i] -= s;
    }
  };
  return node;
}

}  // namespace rvd
