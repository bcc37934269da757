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

#ifndef DPKPS_EPSILON_H_
#define DPKPS_EPSILON_H_

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/statusor.h"

namespace dpkps {

// A pure-DP privacy cost, stored as an integer number of micro-epsilons so
// that composition is exact.
class Epsilon {
 public:
  static constexpr int64_t kMicrosPerUnit = 1'000'000;

  constexpr Epsilon() = default;

  // Rounds to the nearest micro-epsilon. Fails unless the result is a finite
  // value > 0.
  static absl::StatusOr<Epsilon> FromDouble(double value);
  static constexpr Epsilon FromMicros(int64_t micros) { return Epsilon(micros); }

  constexpr int64_t micros() const { return micros_; }
  double value() const { return static_cast<double>(micros_) / kMicrosPerUnit; }

  // Decimal rendering with no rounding, e.g. "1.5" or "0.333333".
  std::string ToString() const;

  // Splits into `parts` shares whose sum is exactly *this. Leftover micros
  // go to the leading shares, one each.
  std::vector<Epsilon> Split(int parts) const;

  constexpr Epsilon operator+(Epsilon other) const {
    return Epsilon(micros_ + other.micros_);
  }
  constexpr Epsilon& operator+=(Epsilon other) {
    micros_ += other.micros_;
    return *this;
  }
  constexpr auto operator<=>(const Epsilon&) const = default;

 private:
  constexpr explicit Epsilon(int64_t micros) : micros_(micros) {}

  int64_t micros_ = 0;
};

}  // namespace dpkps

#endif  // DPKPS_EPSILON_H_
