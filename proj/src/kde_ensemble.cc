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

#include "dpkps/kde_ensemble.h"

#include <bit>
#include <cmath>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "dpkps/random.h"
#include "dpkps/status_macros.h"
#include "glog/logging.h"

namespace dpkps {
namespace {

int CeilLog2(int n) { return std::bit_width(static_cast<unsigned>(n - 1)); }

}  // namespace

std::string_view EnsembleKindName(EnsembleKind kind) {
  switch (kind) {
    case EnsembleKind::kIndependent:
      return "independent";
    case EnsembleKind::kLinear:
      return "linear";
    case EnsembleKind::kLogarithmic:
      return "log";
  }
  return "unknown";
}

absl::StatusOr<EnsembleKind> ParseEnsembleKind(std::string_view name) {
  if (name == "independent") return EnsembleKind::kIndependent;
  if (name == "linear") return EnsembleKind::kLinear;
  if (name == "log" || name == "logarithmic") return EnsembleKind::kLogarithmic;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown ensemble kind \"", std::string(name), "\""));
}

std::vector<BlockGeometry> EnsembleGeometries(EnsembleKind kind, int max_length,
                                              int block_dim) {
  std::vector<BlockGeometry> out;
  switch (kind) {
    case EnsembleKind::kIndependent:
      out.push_back({block_dim, 1, 1.0});
      break;
    case EnsembleKind::kLinear:
      for (int k = 1; k <= max_length; ++k) {
        out.push_back({block_dim, k, 1.0 / k});
      }
      break;
    case EnsembleKind::kLogarithmic:
      for (int j = 0; j <= CeilLog2(max_length); ++j) {
        const int k = 1 << j;
        out.push_back({block_dim, k, k == 1 ? 1.0 : 2.0 / k});
      }
      break;
  }
  return out;
}

absl::StatusOr<PrefixDatasets> BuildPrefixDatasets(
    std::span<const ExtractedSequence> sequences,
    const PublicVocabulary& vocab, const EmbeddingTable& table,
    std::span<const BlockGeometry> geometries) {
  const int d = table.dim();
  PrefixDatasets out;

  // Resolve every document's terms to embedding rows once.
  std::vector<std::vector<int>> rows;
  rows.reserve(sequences.size());
  for (const ExtractedSequence& seq : sequences) {
    if (seq.term_ids.empty()) {
      ++out.skipped_documents;
      continue;
    }
    std::vector<int> doc_rows;
    doc_rows.reserve(seq.term_ids.size());
    for (TermId id : seq.term_ids) {
      if (id < 0 || id >= vocab.size()) {
        return absl::OutOfRangeError(absl::StrCat(
            "term id ", id, " in document \"", seq.doc_id, "\""));
      }
      auto row = table.Find(vocab.term(id));
      if (!row.has_value()) {
        return absl::NotFoundError(absl::StrCat(
            "no embedding for term \"", vocab.term(id), "\""));
      }
      doc_rows.push_back(*row);
    }
    rows.push_back(std::move(doc_rows));
  }
  if (out.skipped_documents > 0) {
    LOG(INFO) << "skipped " << out.skipped_documents
              << " documents with no usable terms";
  }

  for (const BlockGeometry& g : geometries) {
    if (g.block_dim != d || g.num_blocks < 1 || !(g.block_sq_norm > 0)) {
      return absl::InvalidArgumentError("geometry does not match the table");
    }
    PrefixDataset ds;
    ds.geometry = g;
    ds.vectors.resize(static_cast<Eigen::Index>(rows.size()), g.dim());
    const double scale = std::sqrt(g.block_sq_norm);
    for (size_t r = 0; r < rows.size(); ++r) {
      const std::vector<int>& doc = rows[r];
      for (int b = 0; b < g.num_blocks; ++b) {
        std::span<const double> v = table.Row(doc[b % doc.size()]);
        for (int j = 0; j < d; ++j) ds.vectors(r, b * d + j) = scale * v[j];
      }
    }
    out.datasets.push_back(std::move(ds));
  }
  return out;
}

absl::StatusOr<KdeEnsemble> KdeEnsemble::FromSketches(
    EnsembleKind kind, int max_length, std::vector<DpKdeSketch> sketches) {
  if (max_length < 1) return absl::InvalidArgumentError("L must be >= 1");
  if (sketches.empty()) return absl::InvalidArgumentError("no sketches");
  const int d = sketches.front().geometry().block_dim;
  const std::vector<BlockGeometry> expected =
      EnsembleGeometries(kind, max_length, d);
  if (expected.size() != sketches.size()) {
    return absl::InvalidArgumentError(
        absl::StrCat(std::string(EnsembleKindName(kind)), " ensemble with L=", max_length,
                     " needs ", expected.size(), " sketches, got ",
                     sketches.size()));
  }
  for (size_t i = 0; i < expected.size(); ++i) {
    const BlockGeometry& g = sketches[i].geometry();
    if (g.block_dim != expected[i].block_dim ||
        g.num_blocks != expected[i].num_blocks ||
        std::abs(g.block_sq_norm - expected[i].block_sq_norm) > 1e-12) {
      return absl::InvalidArgumentError(
          absl::StrCat("sketch ", i, " has the wrong geometry"));
    }
  }
  KdeEnsemble ensemble;
  ensemble.kind_ = kind;
  ensemble.max_length_ = max_length;
  ensemble.sketches_ = std::move(sketches);
  return ensemble;
}

Epsilon KdeEnsemble::total_epsilon() const {
  Epsilon sum;
  for (const DpKdeSketch& s : sketches_) sum += s.epsilon();
  return sum;
}

absl::StatusOr<int> KdeEnsemble::Route(int prefix_len) const {
  const int limit = kind_ == EnsembleKind::kIndependent ? 1 : max_length_;
  if (prefix_len < 1 || prefix_len > limit) {
    return absl::OutOfRangeError(absl::StrCat(
        "prefix length ", prefix_len, " outside [1, ", limit, "]"));
  }
  switch (kind_) {
    case EnsembleKind::kIndependent:
      return 0;
    case EnsembleKind::kLinear:
      return prefix_len - 1;
    case EnsembleKind::kLogarithmic:
      return CeilLog2(prefix_len);
  }
  return absl::InternalError("unreachable");
}

absl::StatusOr<KdeEnsemble> BuildEnsemble(
    EnsembleKind kind, std::span<const ExtractedSequence> sequences,
    const PublicVocabulary& vocab, const EmbeddingTable& table,
    const EnsembleOptions& options) {
  if (options.max_length < 1) {
    return absl::InvalidArgumentError("L must be >= 1");
  }
  if (options.epsilon.micros() <= 0) {
    return absl::InvalidArgumentError("epsilon_kde must be > 0");
  }
  const std::vector<BlockGeometry> geometries =
      EnsembleGeometries(kind, options.max_length, table.dim());
  DPKPS_ASSIGN_OR_RETURN(
      PrefixDatasets prefix,
      BuildPrefixDatasets(sequences, vocab, table, geometries));
  if (prefix.datasets.front().vectors.rows() == 0) {
    return absl::FailedPreconditionError(
        "no documents with usable terms to build a sketch from");
  }

  const std::vector<Epsilon> shares =
      options.epsilon.Split(static_cast<int>(geometries.size()));
  std::vector<DpKdeSketch> sketches;
  sketches.reserve(geometries.size());
  for (size_t j = 0; j < geometries.size(); ++j) {
    SketchOptions sk;
    sk.num_features = options.num_features;
    sk.epsilon = shares[j];
    sk.geometry = geometries[j];
    sk.feature_seed = DeriveSeed(options.seed, 2 * j);
    sk.noise_seed = DeriveSeed(options.seed, 2 * j + 1);
    sk.noise = options.noise;
    DPKPS_ASSIGN_OR_RETURN(DpKdeSketch sketch,
                           BuildSketch(prefix.datasets[j].vectors, sk));
    sketches.push_back(std::move(sketch));
  }
  return KdeEnsemble::FromSketches(kind, options.max_length,
                                   std::move(sketches));
}

absl::StatusOr<KdeEstimate> EnsembleQuery(
    const KdeEnsemble& ensemble, std::span<const std::string> prefix_terms,
    const EmbeddingTable& table) {
  const int len = static_cast<int>(prefix_terms.size());
  DPKPS_ASSIGN_OR_RETURN(int index, ensemble.Route(len));
  const DpKdeSketch& sketch = ensemble.sketches()[index];
  DPKPS_ASSIGN_OR_RETURN(
      BlockVector y,
      EmbedPrefix(prefix_terms, table, sketch.geometry().block_sq_norm, len));
  return QueryPrefix(sketch, y.data, len);
}

}  // namespace dpkps
