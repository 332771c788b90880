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
//
// Image quality scores against closed-form values and an independent
// direct (non-separable) reference implementation.

#include <cmath>
#include <vector>

#include "doctest.h"
#include "rvdlab/metrics.hpp"
#include "rvdlab/rng.hpp"

using namespace rvd;

namespace {

Tensor constant_image(int h, int w, double v) { return Tensor::full({h, w}, v); }

Tensor random_image(int h, int w, std::uint64_t seed) {
  Tensor t({h, w});
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform();
  return t;
}

// Direct reference: slide the full 11x11 Gaussian window over every position
// where it fits, computing weighted uncorrected moments without any
// separability shortcut. Structural-similarity constants match the scoring
// module's documented parameters.
double reference_ssim_plane(const Tensor& a, const Tensor& b) {
  const int n = 11;
  const double sigma = 1.5;
  const double c1 = 1e-4, c2 = 9e-4;
  double window[11][11];
  double wsum = 0.0;
  for (int u = 0; u < n; ++u) {
    for (int v = 0; v < n; ++v) {
      const double dy = u - 5, dx = v - 5;
      window[u][v] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      wsum += window[u][v];
    }
  }
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) window[u][v] /= wsum;

  const int h = a.dim(0), w = a.dim(1);
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + n <= h; ++y) {
    for (int x = 0; x + n <= w; ++x) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
          const double pa = std::clamp(a.at(y + u, x + v), 0.0, 1.0);
          const double pb = std::clamp(b.at(y + u, x + v), 0.0, 1.0);
          mx += window[u][v] * pa;
          my += window[u][v] * pb;
          xx += window[u][v] * pa * pa;
          yy += window[u][v] * pb * pb;
          xy += window[u][v] * pa * pb;
        }
      }
      const double vx = xx - mx * mx;
      const double vy = yy - my * my;
      const double cov = xy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / count;
}

}  // namespace

TEST_CASE("psnr: closed-form values for uniform error") {
  // MSE 1e-4 -> 40 dB, MSE 1e-2 -> 20 dB.
  Tensor gt = constant_image(16, 16, 0.4);
  Tensor p1 = constant_image(16, 16, 0.41);
  Tensor p2 = constant_image(16, 16, 0.5);
  CHECK(psnr_score(p1, gt) == doctest::Approx(40.0).epsilon(1e-10));
  CHECK(psnr_score(p2, gt) == doctest::Approx(20.0).epsilon(1e-10));

  SUBCASE("identical images hit the cap") {
    CHECK(psnr_score(gt, gt) == doctest::Approx(99.0));
  }
  SUBCASE("inputs clamp to the unit range before scoring") {
    // 1.5 clamps to 1.0 against 0.5: MSE 0.25 -> ~6.0206 dB.
    Tensor wild = constant_image(16, 16, 1.5);
    Tensor mid = constant_image(16, 16, 0.5);
    CHECK(psnr_score(wild, mid) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(psnr_score(constant_image(8, 8, 0.1), gt), Error);
  }
}

TEST_CASE("ssim: constant images follow the two-term closed form") {
  // Variances and covariance vanish, leaving
  //   (2*m1*m2 + C1) / (m1^2 + m2^2 + C1)
  // for means 0.5 and 0.6: 0.6001 / 0.6101.
  Tensor a = constant_image(16, 16, 0.5);
  Tensor b = constant_image(16, 16, 0.6);
  CHECK(ssim_score(a, b) == doctest::Approx(0.6001 / 0.6101).epsilon(1e-12));
  CHECK(ssim_score(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim: separable filtering matches the direct reference") {
  SUBCASE("smooth gradient with noise") {
    Tensor gt({20, 24});
    for (int y = 0; y < 20; ++y)
      for (int x = 0; x < 24; ++x) gt.at(y, x) = 0.2 + 0.02 * y + 0.01 * x;
    Tensor noisy = gt.clone();
    Rng rng(3);
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      noisy.data()[i] += rng.normal(0.0, 0.05);
    }
    CHECK(ssim_score(noisy, gt) == doctest::Approx(reference_ssim_plane(noisy, gt)).epsilon(1e-10));
  }
  SUBCASE("independent random images") {
    Tensor a = random_image(16, 21, 7);
    Tensor b = random_image(16, 21, 8);
    CHECK(ssim_score(a, b) == doctest::Approx(reference_ssim_plane(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("ssim: multi-channel scores average the per-channel results") {
  const int h = 14, w = 14;
  Tensor a({2, h, w}), b({2, h, w});
  // Channel 0 identical; channel 1 constant offset.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = 0.3 + 0.01 * x;
      a.data()[static_cast<std::size_t>(y * w + x)] = v;
      b.data()[static_cast<std::size_t>(y * w + x)] = v;
      a.data()[static_cast<std::size_t>(h * w + y * w + x)] = 0.5;
      b.data()[static_cast<std::size_t>(h * w + y * w + x)] = 0.6;
    }
  }
  const double expected = 0.5 * (1.0 + 0.6001 / 0.6101);
  CHECK(ssim_score(a, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim: window must fit inside the image") {
  Tensor small = constant_image(10, 16, 0.5);
  CHECK_THROWS_AS(ssim_score(small, small), Error);
  Tensor tall = constant_image(16, 10, 0.5);
  CHECK_THROWS_AS(ssim_score(tall, tall), Error);
  // 11x11 exactly fits.
  Tensor fit = constant_image(11, 11, 0.5);
  CHECK(ssim_score(fit, fit) == doctest::Approx(1.0));
}

TEST_CASE("score pair bundles both metrics") {
  Tensor gt = random_image(16, 16, 11);
  Tensor pred = gt.clone();
  for (std::size_t i = 0; i < pred.size(); ++i) pred.data()[i] += 0.01;
  const Metrics m = score_pair(pred, gt);
  CHECK(m.psnr == doctest::Approx(psnr_score(pred, gt)));
  CHECK(m.ssim == doctest::Approx(ssim_score(pred, gt)));
}
