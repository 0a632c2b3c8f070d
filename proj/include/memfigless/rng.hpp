/*
 * Copyright (c) The MemFigLess Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace memfigless {

// SplitMix64 step. Used to derive independent substream seeds; the output of
// one mix call is well distributed even for sequential inputs.
inline std::uint64_t split_mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic substream seed for (base seed, stream index). Every component
// that needs its own stream (per tree, per request, per retrain) derives its
// seed through this so that schedules and thread counts cannot reorder draws.
inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t stream) {
  return split_mix64(base ^ split_mix64(stream + 0x632BE59BD9B4E019ULL));
}

// Thin deterministic RNG wrapper. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions below are hand rolled
// because the standard library's distribution objects are
// implementation-defined and would break byte-identical artifacts.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n). Rejection-free multiply-shift (Lemire) with a
  // correction loop to keep the result exactly uniform.
  std::uint64_t bounded(std::uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(next()) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<__uint128_t>(next()) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Standard normal via Box-Muller. Uses two fresh uniforms per draw (no
  // cached second value) so the draw count per call site is fixed.
  double normal() {
    const double u1 = 1.0 - unit();  // (0, 1]: keeps the log finite.
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace memfigless
