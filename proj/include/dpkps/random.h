// Copyright 2026 The dpkps Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPKPS_RANDOM_H_
#define DPKPS_RANDOM_H_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace dpkps {

// Derives an independent stream seed from a parent seed and a stream tag
// (SplitMix64 finalizer over the pair).
uint64_t DeriveSeed(uint64_t seed, uint64_t stream);

// Stable 64-bit FNV-1a hash. Used for derived seeds, checksums and the mock
// generator; unlike std::hash its value is fixed across platforms.
uint64_t Fnv1a64(std::string_view bytes, uint64_t basis = 0xcbf29ce484222325ULL);
uint64_t Fnv1a64(std::span<const double> values,
                 uint64_t basis = 0xcbf29ce484222325ULL);

// Seeded generator with portable variate transforms. All draws are derived
// from the raw 64-bit engine output so results do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double Uniform();

  // Standard normal via Box-Muller (two uniforms per draw, no caching).
  double Normal();

  // Laplace(0, scale) by inverse CDF:
  //   -scale * sign(u - 1/2) * ln(1 - 2|u - 1/2|).
  double Laplace(double scale);

  // Uniform integer in [0, n). Requires n > 0.
  uint64_t UniformIndex(uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace dpkps

#endif  // DPKPS_RANDOM_H_
