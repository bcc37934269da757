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

#include "dpkps/dp_kde.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "dpkps/random.h"
#include "glog/logging.h"
#include "json.hpp"

namespace dpkps {
namespace {

using nlohmann::json;

constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr double kBlockNormTolerance = 1e-6;
constexpr int kBuildChunkRows = 256;
constexpr char kSketchFormat[] = "dpkps.sketch.v1";
constexpr char kCalibration[] =
    "laplace b = 2*sqrt(2)*I / (epsilon * max(|X|-1, 1))";

absl::Status CheckBlocks(std::span<const double> v, const BlockGeometry& g,
                         int blocks, std::string_view what) {
  for (int b = 0; b < blocks; ++b) {
    double sq = 0;
    for (int j = 0; j < g.block_dim; ++j) {
      const double x = v[b * g.block_dim + j];
      sq += x * x;
    }
    if (std::abs(sq - g.block_sq_norm) > kBlockNormTolerance) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "%s block %d has squared norm %.9g, expected %.9g",
          std::string(what), b, sq, g.block_sq_norm));
    }
  }
  return absl::OkStatus();
}

double MeanFeatureProduct(const DpKdeSketch& sketch,
                          const Eigen::VectorXd& features) {
  return sketch.noisy_means().dot(features) / sketch.num_features();
}

}  // namespace

RandomFourierFeatures::RandomFourierFeatures(int dim, int num_features,
                                             uint64_t seed)
    : omegas_(num_features, dim), betas_(num_features), seed_(seed) {
  Rng rng(seed);
  for (int i = 0; i < num_features; ++i) {
    for (int j = 0; j < dim; ++j) omegas_(i, j) = rng.Normal();
    betas_(i) = 2.0 * std::numbers::pi * rng.Uniform();
  }
}

Eigen::VectorXd RandomFourierFeatures::Evaluate(
    std::span<const double> z) const {
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), z.size());
  Eigen::VectorXd phase = omegas_.leftCols(z.size()) * zv;
  Eigen::VectorXd out(num_features());
  for (int i = 0; i < num_features(); ++i) {
    out(i) = kSqrt2 * std::cos(kSqrt2 * phase(i) + betas_(i));
  }
  return out;
}

uint64_t RandomFourierFeatures::Checksum() const {
  uint64_t h = Fnv1a64(std::span<const double>(omegas_.data(), omegas_.size()));
  return Fnv1a64(std::span<const double>(betas_.data(), betas_.size()), h);
}

double GaussianKernel(std::span<const double> x, std::span<const double> y) {
  double sq = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    sq += diff * diff;
  }
  return std::exp(-sq);
}

absl::StatusOr<double> ExactKde(const RowMatrix& points,
                                std::span<const double> y) {
  if (points.rows() == 0) {
    return absl::InvalidArgumentError("KDE of an empty point set");
  }
  if (points.cols() != static_cast<Eigen::Index>(y.size())) {
    return absl::InvalidArgumentError(absl::StrCat(
        "query has dimension ", y.size(), ", points have ", points.cols()));
  }
  double sum = 0;
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    sum += GaussianKernel(
        std::span<const double>(points.row(r).data(), points.cols()), y);
  }
  return sum / points.rows();
}

double SketchNoiseScale(int num_features, Epsilon epsilon, int dataset_size) {
  return 2.0 * kSqrt2 * num_features /
         (epsilon.value() * std::max(dataset_size - 1, 1));
}

absl::StatusOr<DpKdeSketch> BuildSketch(const RowMatrix& points,
                                        const SketchOptions& options) {
  const BlockGeometry& g = options.geometry;
  if (options.num_features < 1) {
    return absl::InvalidArgumentError("num_features must be >= 1");
  }
  if (options.epsilon.micros() <= 0) {
    return absl::InvalidArgumentError("epsilon must be > 0");
  }
  if (g.block_dim < 1 || g.num_blocks < 1 || !(g.block_sq_norm > 0)) {
    return absl::InvalidArgumentError("invalid block geometry");
  }
  if (points.rows() < 1) {
    return absl::InvalidArgumentError("cannot sketch an empty dataset");
  }
  if (points.cols() != g.dim()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "points have dimension ", points.cols(), ", geometry expects ",
        g.dim()));
  }
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    absl::Status s =
        CheckBlocks(std::span<const double>(points.row(r).data(), g.dim()), g,
                    g.num_blocks, absl::StrCat("point ", r));
    if (!s.ok()) return s;
  }

  const int n = static_cast<int>(points.rows());
  const int num_features = options.num_features;
  if (static_cast<double>(n) * options.epsilon.value() / num_features < 1.0) {
    LOG(WARNING) << "sketch accuracy precondition |X| * eps * alpha^2 >= 1 "
                 << "fails (|X|=" << n << ", eps=" << options.epsilon.value()
                 << ", alpha^2=1/I=" << 1.0 / num_features << ")";
  }

  DpKdeSketch sketch;
  sketch.geometry_ = g;
  sketch.features_ =
      RandomFourierFeatures(g.dim(), num_features, options.feature_seed);
  sketch.epsilon_ = options.epsilon;
  sketch.dataset_size_ = n;
  sketch.noise_disabled_ = !options.noise.enabled();

  // Fixed chunking keeps the summation order independent of |X| layout.
  const RowMatrix& omegas = sketch.features_.omegas();
  const Eigen::VectorXd& betas = sketch.features_.betas();
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(num_features);
  for (int start = 0; start < n; start += kBuildChunkRows) {
    const int rows = std::min(kBuildChunkRows, n - start);
    const RowMatrix phase =
        points.middleRows(start, rows) * omegas.transpose();
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < num_features; ++i) {
        sums(i) += kSqrt2 * std::cos(kSqrt2 * phase(r, i) + betas(i));
      }
    }
  }
  sketch.noisy_means_ = sums / n;

  if (options.noise.enabled()) {
    sketch.noise_scale_ =
        SketchNoiseScale(num_features, options.epsilon, n);
    Rng noise(options.noise_seed);
    for (int i = 0; i < num_features; ++i) {
      sketch.noisy_means_(i) += noise.Laplace(sketch.noise_scale_);
    }
  }
  return sketch;
}

absl::StatusOr<KdeEstimate> Query(const DpKdeSketch& sketch,
                                  std::span<const double> y) {
  if (static_cast<int>(y.size()) != sketch.dim()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "query has dimension ", y.size(), ", sketch has ", sketch.dim()));
  }
  const int k = sketch.geometry().num_blocks;
  return KdeEstimate{
      .value = MeanFeatureProduct(sketch, sketch.features().Evaluate(y)),
      .prefix_len = k,
      .blowup = 1.0};
}

absl::StatusOr<KdeEstimate> QueryPrefix(const DpKdeSketch& sketch,
                                        std::span<const double> y,
                                        int prefix_blocks) {
  const BlockGeometry& g = sketch.geometry();
  if (prefix_blocks < 1 || prefix_blocks > g.num_blocks) {
    return absl::OutOfRangeError(absl::StrCat(
        "prefix length ", prefix_blocks, " outside [1, ", g.num_blocks, "]"));
  }
  if (static_cast<int>(y.size()) != g.block_dim * prefix_blocks) {
    return absl::InvalidArgumentError(
        absl::StrCat("prefix query has dimension ", y.size(), ", expected ",
                     g.block_dim * prefix_blocks));
  }
  absl::Status s = CheckBlocks(y, g, prefix_blocks, "query");
  if (!s.ok()) return s;

  const double blowup =
      std::exp(g.block_sq_norm * (g.num_blocks - prefix_blocks));
  // Evaluate() treats the missing trailing blocks as zeros.
  const double padded = MeanFeatureProduct(sketch, sketch.features().Evaluate(y));
  return KdeEstimate{
      .value = blowup * padded, .prefix_len = prefix_blocks, .blowup = blowup};
}

absl::StatusOr<std::string> SerializeSketch(const DpKdeSketch& sketch) {
  if (sketch.noise_disabled()) {
    return absl::FailedPreconditionError(
        "refusing to serialize a sketch built without noise");
  }
  const BlockGeometry& g = sketch.geometry();
  json means = json::array();
  for (double v : sketch.noisy_means()) means.push_back(v);
  json out = {
      {"format", kSketchFormat},
      {"block_dim", g.block_dim},
      {"num_blocks", g.num_blocks},
      {"block_sq_norm", g.block_sq_norm},
      {"num_features", sketch.num_features()},
      {"epsilon", sketch.epsilon().ToString()},
      {"epsilon_micros", sketch.epsilon().micros()},
      {"dataset_size", sketch.dataset_size()},
      {"noise_scale", sketch.noise_scale()},
      {"calibration", kCalibration},
      {"feature_seed", sketch.features().seed()},
      {"feature_checksum",
       absl::StrFormat("%016x", sketch.features().Checksum())},
      {"noisy_means", std::move(means)},
  };
  return out.dump();
}

absl::StatusOr<DpKdeSketch> ParseSketch(const std::string& text) {
  json in = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (in.is_discarded() || !in.is_object()) {
    return absl::InvalidArgumentError("sketch is not a JSON object");
  }
  if (in.value("format", "") != kSketchFormat) {
    return absl::InvalidArgumentError("unrecognized sketch format");
  }
  DpKdeSketch sketch;
  try {
    sketch.geometry_ = BlockGeometry{
        .block_dim = in.at("block_dim").get<int>(),
        .num_blocks = in.at("num_blocks").get<int>(),
        .block_sq_norm = in.at("block_sq_norm").get<double>()};
    const int num_features = in.at("num_features").get<int>();
    sketch.epsilon_ =
        Epsilon::FromMicros(in.at("epsilon_micros").get<int64_t>());
    sketch.dataset_size_ = in.at("dataset_size").get<int>();
    sketch.noise_scale_ = in.at("noise_scale").get<double>();
    const std::vector<double> means =
        in.at("noisy_means").get<std::vector<double>>();
    if (num_features < 1 || static_cast<int>(means.size()) != num_features ||
        sketch.geometry_.dim() < 1 || sketch.epsilon_.micros() <= 0) {
      return absl::InvalidArgumentError("inconsistent sketch fields");
    }
    sketch.noisy_means_ =
        Eigen::Map<const Eigen::VectorXd>(means.data(), means.size());
    sketch.features_ = RandomFourierFeatures(
        sketch.geometry_.dim(), num_features,
        in.at("feature_seed").get<uint64_t>());
    const std::string expected = in.at("feature_checksum").get<std::string>();
    const std::string actual =
        absl::StrFormat("%016x", sketch.features_.Checksum());
    if (expected != actual) {
      return absl::DataLossError(absl::StrCat(
          "regenerated features do not match the sketch (checksum ", actual,
          " != ", expected, ")"));
    }
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed sketch: ", e.what()));
  }
  return sketch;
}

}  // namespace dpkps
