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

#include "rvdlab/attention_ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "rvdlab/common.hpp"

namespace rvd {

namespace {

// Candidate flat index for row/column attention at (y,x): first the W row
// entries, then the column without (y,x) itself.
inline std::size_t candidate_index(int j, int y, int x, int w) {
  if (j < w) return static_cast<std::size_t>(y) * w + j;
  int yy = j - w;
  if (yy >= y) ++yy;  // skip the center row entry already covered
  return static_cast<std::size_t>(yy) * w + x;
}

void softmax_inplace(std::vector<double>& v) {
  double mx = v[0];
  for (double e : v) mx = std::max(mx, e);
  double sum = 0.0;
  for (double& e : v) {
    e = std::exp(e - mx);
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (double& e : v) e *= inv;
}

}  // namespace

Var criss_cross_attend(Tape& tape, const Var& q, const Var& k, const Var& v) {
  require(q->value.ndim() == 4 && k->value.ndim() == 4 && v->value.ndim() == 4,
          ErrorKind::dimension, "criss_cross_attend expects NCHW");
  require(q->value.same_shape(k->value), ErrorKind::dimension, "q/k shape mismatch");
  const int b_n = q->value.dim(0), cq = q->value.dim(1);
  const int h = q->value.dim(2), w = q->value.dim(3);
  require(v->value.dim(0) == b_n && v->value.dim(2) == h && v->value.dim(3) == w,
          ErrorKind::dimension, "v spatial dims mismatch");
  const int cv = v->value.dim(1);
  const int n_cand = h + w - 1;
  const std::size_t s = static_cast<std::size_t>(h) * w;

  Tensor out({b_n, cv, h, w});
  {
    std::vector<double> logits(static_cast<std::size_t>(n_cand));
    for (int b = 0; b < b_n; ++b) {
      const double* qb = q->value.data() + static_cast<std::size_t>(b) * cq * s;
      const double* kb = k->value.data() + static_cast<std::size_t>(b) * cq * s;
      const double* vb = v->value.data() + static_cast<std::size_t>(b) * cv * s;
      double* ob = out.data() + static_cast<std::size_t>(b) * cv * s;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          for (int j = 0; j < n_cand; ++j) {
            const std::size_t cj = candidate_index(j, y, x, w);
            double acc = 0.0;
            for (int c = 0; c < cq; ++c) {
              acc += qb[static_cast<std::size_t>(c) * s + p] *
                     kb[static_cast<std::size_t>(c) * s + cj];
            }
            logits[static_cast<std::size_t>(j)] = acc;
          }
          softmax_inplace(logits);
          for (int c = 0; c < cv; ++c) {
            double acc = 0.0;
            const double* vc = vb + static_cast<std::size_t>(c) * s;
            for (int j = 0; j < n_cand; ++j) {
              acc += logits[static_cast<std::size_t>(j)] * vc[candidate_index(j, y, x, w)];
            }
            ob[static_cast<std::size_t>(c) * s + p] = acc;
          }
        }
      }
    }
  }

  Var node = tape.record(std::move(out), {q, k, v}, nullptr);
  node->backward = [node, q, k, v, b_n, cq, cv, h, w, n_cand, s]() {
    std::vector<double> logits(static_cast<std::size_t>(n_cand));
    std::vector<double> d_alpha(static_cast<std::size_t>(n_cand));
    const bool need_q = q->requires_grad, need_k = k->requires_grad, need_v = v->requires_grad;
    double* dq = need_q ? grad_buffer(q).data() : nullptr;
    double* dk = need_k ? grad_buffer(k).data() : nullptr;
    double* dv = need_v ? grad_buffer(v).data() : nullptr;
    for (int b = 0; b < b_n; ++b) {
      const double* qb = q->value.data() + static_cast<std::size_t>(b) * cq * s;
      const double* kb = k->value.data() + static_cast<std::size_t>(b) * cq * s;
      const double* vb = v->value.data() + static_cast<std::size_t>(b) * cv * s;
      const double* gb = node->grad.data() + static_cast<std::size_t>(b) * cv * s;
      double* dqb = need_q ? dq + static_cast<std::size_t>(b) * cq * s : nullptr;
      double* dkb = need_k ? dk + static_cast<std::size_t>(b) * cq * s : nullptr;
      double* dvb = need_v ? dv + static_cast<std::size_t>(b) * cv * s : nullptr;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          // Recompute the attention row (cheaper than storing it tape-wide).
          for (int j = 0; j < n_cand; ++j) {
            const std::size_t cj = candidate_index(j, y, x, w);
            double acc = 0.0;
            for (int c = 0; c < cq; ++c) {
              acc += qb[static_cast<std::size_t>(c) * s + p] *
                     kb[static_cast<std::size_t>(c) * s + cj];
            }
            logits[static_cast<std::size_t>(j)] = acc;
          }
          softmax_inplace(logits);  // now alpha
          // d_alpha_j = sum_c g(c,p) * v(c, cand_j); also dv via alpha.
          double dot = 0.0;
          for (int j = 0; j < n_cand; ++j) {
            const std::size_t cj = candidate_index(j, y, x, w);
            double acc = 0.0;
            for (int c = 0; c < cv; ++c) {
              const double gv = gb[static_cast<std::size_t>(c) * s + p];
              acc += gv * vb[static_cast<std::size_t>(c) * s + cj];
              if (need_v) {
                dvb[static_cast<std::size_t>(c) * s + cj] +=
                    logits[static_cast<std::size_t>(j)] * gv;
              }
            }
            d_alpha[static_cast<std::size_t>(j)] = acc;
            dot += logits[static_cast<std::size_t>(j)] * acc;
          }
          if (!need_q && !need_k) continue;
          for (int j = 0; j < n_cand; ++j) {
            const double d_logit = logits[static_cast<std::size_t>(j)] *
                                   (d_alpha[static_cast<std::size_t>(j)] - dot);
            if (d_logit == 0.0) continue;
            const std::size_t cj = candidate_index(j, y, x, w);
            for (int c = 0; c < cq; ++c) {
              if (need_q) {
                dqb[static_cast<std::size_t>(c) * s + p] +=
                    d_logit * kb[static_cast<std::size_t>(c) * s + cj];
              }
              if (need_k) {
                dkb[static_cast<std::size_t>(c) * s + cj] +=
                    d_logit * qb[static_cast<std::size_t>(c) * s + p];
              }
            }
          }
        }
      }
    }
  };
  return node;
}

Var gram_softmax_recombine(Tape& tape, const Var& x) {
  require(x->value.ndim() == 2, ErrorKind::dimension, "gram_softmax_recombine expects (R,M)");
  const int r = x->value.dim(0), m = x->value.dim(1);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
      x->value.data(), r, m);

  // A = softmax_rows(X X^T)
  auto a = std::make_shared<Eigen::MatrixXd>(xm * xm.transpose());
  for (int i = 0; i < r; ++i) {
    double mx = (*a)(i, 0);
    for (int j = 1; j < r; ++j) mx = std::max(mx, (*a)(i, j));
    double sum = 0.0;
    for (int j = 0; j < r; ++j) {
      (*a)(i, j) = std::exp((*a)(i, j) - mx);
      sum += (*a)(i, j);
    }
    for (int j = 0; j < r; ++j) (*a)(i, j) /= sum;
  }

  Tensor out({r, m});
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> om(
      out.data(), r, m);
  om.noalias() = (*a) * xm;

  Var node = tape.record(std::move(out), {x}, nullptr);
  node->backward = [node, x, a, r, m]() {
    if (!x->requires_grad) return;
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
        x->value.data(), r, m);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> g(
        node->grad.data(), r, m);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dx(
        grad_buffer(x).data(), r, m);
    // Y = A X with A = softmax_rows(S), S = X X^T.
    dx.noalias() += a->transpose() * g;
    Eigen::MatrixXd d_a = g * xm.transpose();  // (R,R)
    Eigen::MatrixXd d_s(r, r);
    for (int i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int j = 0; j < r; ++j) dot += (*a)(i, j) * d_a(i, j);
      for (int j = 0; j < r; ++j) d_s(i, j) = (*a)(i, j) * (d_a(i, j) - dot);
    }
    dx.noalias() += (d_s + d_s.transpose()) * xm;
  };
  return node;
}

}  // namespace rvd
