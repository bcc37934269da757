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

#ifndef DPKPS_DP_KDE_H_
#define DPKPS_DP_KDE_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "Eigen/Core"
#include "absl/status/statusor.h"
#include "dpkps/epsilon.h"

namespace dpkps {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Layout of the vectors a sketch is built over: `num_blocks` concatenated
// blocks of `block_dim` entries, each block of squared norm `block_sq_norm`.
struct BlockGeometry {
  int block_dim = 0;
  int num_blocks = 0;
  double block_sq_norm = 0;

  int dim() const { return block_dim * num_blocks; }
};

// Random Fourier features for the Gaussian kernel exp(-||x - y||^2):
//   f_i(z) = sqrt(2) cos(sqrt(2) <omega_i, z> + beta_i)
// with omega_i ~ N(0, I_D) and beta_i ~ U[0, 2 pi). E[f_i(x) f_i(y)] is the
// kernel value. Everything here is public randomness regenerated from `seed`.
class RandomFourierFeatures {
 public:
  RandomFourierFeatures() = default;
  RandomFourierFeatures(int dim, int num_features, uint64_t seed);

  int dim() const { return static_cast<int>(omegas_.cols()); }
  int num_features() const { return static_cast<int>(omegas_.rows()); }
  uint64_t seed() const { return seed_; }

  // I x D, row i is omega_i.
  const RowMatrix& omegas() const { return omegas_; }
  const Eigen::VectorXd& betas() const { return betas_; }

  // All I feature values at `z`; only the first z.size() coordinates of each
  // omega are used, i.e. z is implicitly zero-padded to dim().
  Eigen::VectorXd Evaluate(std::span<const double> z) const;

  // Hash of omegas and betas; detects a regeneration mismatch.
  uint64_t Checksum() const;

 private:
  RowMatrix omegas_;
  Eigen::VectorXd betas_;
  uint64_t seed_ = 0;
};

class NoiseControl;
namespace testing_hooks {
// Defined only in the dpkps_testing library.
NoiseControl DisableNoiseForTesting();
}  // namespace testing_hooks

// Whether Laplace noise is applied at build time. Default-constructed values
// always enable noise; the only way to obtain a disabled one is the test hook
// above, which production binaries do not link.
class NoiseControl {
 public:
  NoiseControl() = default;
  bool enabled() const { return enabled_; }

 private:
  friend NoiseControl testing_hooks::DisableNoiseForTesting();
  explicit NoiseControl(bool enabled) : enabled_(enabled) {}

  bool enabled_ = true;
};

struct SketchOptions {
  int num_features = 2000;
  Epsilon epsilon;
  BlockGeometry geometry;
  // Seeds omega/beta; recorded in the serialized sketch.
  uint64_t feature_seed = 0;
  // Seeds the Laplace noise; never recorded.
  uint64_t noise_seed = 0;
  NoiseControl noise;
};

// The epsilon-DP release: public features plus noisy mean feature values
//   F_i = (1/|X|) sum_x f_i(x) + Lambda_i,  Lambda_i ~ Laplace(b).
class DpKdeSketch {
 public:
  const BlockGeometry& geometry() const { return geometry_; }
  int dim() const { return geometry_.dim(); }
  int num_features() const { return features_.num_features(); }
  Epsilon epsilon() const { return epsilon_; }
  int dataset_size() const { return dataset_size_; }
  double noise_scale() const { return noise_scale_; }
  bool noise_disabled() const { return noise_disabled_; }
  const RandomFourierFeatures& features() const { return features_; }
  const Eigen::VectorXd& noisy_means() const { return noisy_means_; }

 private:
  friend absl::StatusOr<DpKdeSketch> BuildSketch(const RowMatrix& points,
                                                 const SketchOptions& options);
  friend absl::StatusOr<DpKdeSketch> ParseSketch(const std::string& text);

  BlockGeometry geometry_;
  RandomFourierFeatures features_;
  Eigen::VectorXd noisy_means_;
  Epsilon epsilon_;
  int dataset_size_ = 0;
  double noise_scale_ = 0;
  bool noise_disabled_ = false;
};

struct KdeEstimate {
  // Unclamped; noise can push it below 0 or above 1.
  double value = 0;
  int prefix_len = 0;
  // e^{u (k - prefix_len)} factor applied for zero-padded queries.
  double blowup = 1;
};

// exp(-||x - y||^2).
double GaussianKernel(std::span<const double> x, std::span<const double> y);

// Brute-force (1/|X|) sum_x exp(-||y - x||^2) over the rows of `points`.
absl::StatusOr<double> ExactKde(const RowMatrix& points,
                                std::span<const double> y);

// Laplace scale for the noisy means. The vector of I means moves by at most
// 2 sqrt(2) I / (|X| - 1) in l1 when one record is dropped, hence
//   b = 2 sqrt(2) I / (epsilon * max(|X| - 1, 1)).
double SketchNoiseScale(int num_features, Epsilon epsilon, int dataset_size);

// Builds the sketch over the rows of `points`, each of which must match
// `options.geometry` (every block at squared norm u, tolerance 1e-6).
absl::StatusOr<DpKdeSketch> BuildSketch(const RowMatrix& points,
                                        const SketchOptions& options);

// (1/I) sum_i F_i f_i(y) for a full-dimension query.
absl::StatusOr<KdeEstimate> Query(const DpKdeSketch& sketch,
                                  std::span<const double> y);

// KDE over the length-`prefix_blocks` prefixes of the sketched data. `y` holds
// prefix_blocks blocks of squared norm u; it is zero-padded to the sketch
// dimension and the result multiplied by e^{u (k - prefix_blocks)}.
absl::StatusOr<KdeEstimate> QueryPrefix(const DpKdeSketch& sketch,
                                        std::span<const double> y,
                                        int prefix_blocks);

// JSON artifact. Stores the feature seed and checksum rather than omega.
// Sketches built with noise disabled are refused.
absl::StatusOr<std::string> SerializeSketch(const DpKdeSketch& sketch);
absl::StatusOr<DpKdeSketch> ParseSketch(const std::string& text);

}  // namespace dpkps

#endif  // DPKPS_DP_KDE_H_
