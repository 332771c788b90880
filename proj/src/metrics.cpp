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

#include "rvdlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rvdlab/common.hpp"

namespace rvd {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2 with L = 1
constexpr double kC2 = 0.03 * 0.03;  // (K2 * L)^2

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

const std::vector<double>& gaussian_taps() {
  static const std::vector<double> taps = [] {
    std::vector<double> t(kWindow);
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      const double d = i - (kWindow - 1) / 2.0;
      t[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += t[static_cast<std::size_t>(i)];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps;
}

// Separable weighted blur over one (H,W) plane, valid region only: the
// output is (H-10, W-10) with out(y,x) holding the window sum anchored at
// (y,x) in the source.
std::vector<double> blur_valid(const std::vector<double>& src, int h, int w) {
  const auto& taps = gaussian_taps();
  const int wo = w - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * static_cast<std::size_t>(wo));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) {
        acc += taps[static_cast<std::size_t>(k)] *
               src[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                   static_cast<std::size_t>(x + k)];
      }
      tmp[static_cast<std::size_t>(y) * static_cast<std::size_t>(wo) +
          static_cast<std::size_t>(x)] = acc;
    }
  }
  const int ho = h - kWindow + 1;
  std::vector<double> out(static_cast<std::size_t>(ho) * static_cast<std::size_t>(wo));
  for (int y = 0; y < ho; ++y) {
    for (int x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) {
        acc += taps[static_cast<std::size_t>(k)] *
               tmp[static_cast<std::size_t>(y + k) * static_cast<std::size_t>(wo) +
                   static_cast<std::size_t>(x)];
      }
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(wo) +
          static_cast<std::size_t>(x)] = acc;
    }
  }
  return out;
}

double ssim_plane(const double* pred, const double* gt, int h, int w) {
  require(h >= kWindow && w >= kWindow, ErrorKind::dimension,
          "similarity window does not fit inside the image");
  const std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = clamp01(pred[i]);
    const double b = clamp01(gt[i]);
    x[i] = a;
    y[i] = b;
    xx[i] = a * a;
    yy[i] = b * b;
    xy[i] = a * b;
  }
  const std::vector<double> mx = blur_valid(x, h, w);
  const std::vector<double> my = blur_valid(y, h, w);
  const std::vector<double> mxx = blur_valid(xx, h, w);
  const std::vector<double> myy = blur_valid(yy, h, w);
  const std::vector<double> mxy = blur_valid(xy, h, w);

  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace

double psnr_score(const Tensor& pred, const Tensor& gt) {
  require(pred.shape() == gt.shape(), ErrorKind::dimension,
          "score inputs must have identical shapes");
  require(pred.size() > 0, ErrorKind::dimension, "cannot score empty tensors");
  double mse = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = clamp01(pred[i]) - clamp01(gt[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(pred.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim_score(const Tensor& pred, const Tensor& gt) {
  require(pred.shape() == gt.shape(), ErrorKind::dimension,
          "score inputs must have identical shapes");
  int channels = 1, h = 0, w = 0;
  if (pred.ndim() == 2) {
    h = pred.dim(0);
    w = pred.dim(1);
  } else if (pred.ndim() == 3) {
    channels = pred.dim(0);
    h = pred.dim(1);
    w = pred.dim(2);
  } else {
    fail(ErrorKind::dimension, "similarity expects (H,W) or (C,H,W) inputs");
  }
  const std::size_t plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    total += ssim_plane(pred.data() + static_cast<std::size_t>(c) * plane,
                        gt.data() + static_cast<std::size_t>(c) * plane, h, w);
  }
  return total / channels;
}

Metrics score_pair(const Tensor& pred, const Tensor& gt) {
  return Metrics{psnr_score(pred, gt), ssim_score(pred, gt)};
}

}  // namespace rvd
