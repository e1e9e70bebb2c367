// Copyright 2026  The lidkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef LIDKIT_RNG_H_
#define LIDKIT_RNG_H_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <utility>

namespace lidkit {

// Seeded generator with platform-independent derived distributions. The
// standard <random> distributions are implementation-defined, which would
// break bit-identical reruns across toolchains, so only the engine is used.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(Mix(seed)) {}

  // Independent stream for a named sub-task, e.g. one utterance.
  static Rng Derive(uint64_t seed, uint64_t stream) {
    return Rng(Mix(seed ^ Mix(stream + 0x9e3779b97f4a7c15ULL)));
  }
  static Rng Derive(uint64_t seed, std::string_view name) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : name) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return Derive(seed, h);
  }

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1).
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  // Uniform in the closed interval [lo, hi].
  double Uniform(double lo, double hi) {
    double u = static_cast<double>(engine_() >> 11) / double((1ULL << 53) - 1);
    return lo + (hi - lo) * u;
  }
  // Uniform integer in [0, n).
  uint64_t Index(uint64_t n) {
    // Lemire's rejection keeps the draw unbiased.
    uint64_t threshold = (0 - n) % n;
    while (true) {
      uint64_t r = engine_();
      if (r >= threshold) return r % n;
    }
  }
  double Normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = Uniform();
    double u2 = Uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }
  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }

  template <typename It>
  void Shuffle(It first, It last) {
    auto n = last - first;
    for (decltype(n) i = n - 1; i > 0; --i) {
      auto j = static_cast<decltype(n)>(Index(static_cast<uint64_t>(i) + 1));
      using std::swap;
      swap(first[i], first[j]);
    }
  }

  static uint64_t Mix(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lidkit

#endif  // LIDKIT_RNG_H_
