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

#include <cmath>
#include <cstdint>
#include <random>

namespace rvd {

// SplitMix64 step — used to turn (seed, stream-id) pairs into well-mixed
// sub-seeds so every frame/step gets an independent deterministic stream.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base;
  std::uint64_t a = splitmix64(s);
  s = a ^ (stream + 0x9e3779b97f4a7c15ULL);
  return splitmix64(s);
}

// Deterministic RNG with cheap derived substreams. All stochastic code in the
// library draws through this type, never from a global engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Independent stream derived from this RNG's seed (not its current state),
  // so substream(i) is reproducible no matter how much was drawn before.
  Rng substream(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

  std::uint64_t next_u64() { return eng_(); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return std::uniform_int_distribution<int>(lo, hi)(eng_);
  }

  double normal(double mean, double stddev) {
    if (stddev <= 0.0) return mean;
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }

  // Poisson count as a double. Above kPoissonGaussianCutoff the distribution
  // is indistinguishable from N(lambda, lambda) at double precision, and the
  // moment-matched Gaussian keeps sampling O(1); counts that large make the
  // integer grid irrelevant, so the value is left continuous.
  static constexpr double kPoissonGaussianCutoff = 1e5;

  double poisson(double lambda) {
    if (lambda <= 0.0) return 0.0;
    if (lambda > kPoissonGaussianCutoff) {
      return normal(lambda, std::sqrt(lambda));
    }
    return static_cast<double>(std::poisson_distribution<long long>(lambda)(eng_));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace rvd
