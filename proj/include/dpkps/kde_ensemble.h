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

#ifndef DPKPS_KDE_ENSEMBLE_H_
#define DPKPS_KDE_ENSEMBLE_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "dpkps/corpus_io.h"
#include "dpkps/dp_kde.h"
#include "dpkps/embedding_store.h"
#include "dpkps/epsilon.h"

namespace dpkps {

enum class EnsembleKind {
  // One k=1 sketch with the whole budget; serves single-keyphrase scores.
  kIndependent,
  // One sketch per prefix length 1..L, u_k = 1/k.
  kLinear,
  // Sketches at k = 1, 2, 4, ..., 2^ceil(log2 L); u = 1 for k = 1 and 2/k
  // otherwise. A prefix of length l goes to k = 2^ceil(log2 l).
  kLogarithmic,
};

std::string_view EnsembleKindName(EnsembleKind kind);
absl::StatusOr<EnsembleKind> ParseEnsembleKind(std::string_view name);

// Sketch geometries (k, u) for an ensemble of `kind` over length-L sequences.
std::vector<BlockGeometry> EnsembleGeometries(EnsembleKind kind, int max_length,
                                              int block_dim);

struct PrefixDataset {
  BlockGeometry geometry;
  // One row per contributing document.
  RowMatrix vectors;
};

struct PrefixDatasets {
  std::vector<PrefixDataset> datasets;
  // Documents dropped because none of their terms survived.
  int skipped_documents = 0;
};

// For every geometry, one vector per document: its first k term embeddings,
// cycling through the document's terms when it has fewer than k, each block
// scaled to squared norm u. Every term must have an embedding.
absl::StatusOr<PrefixDatasets> BuildPrefixDatasets(
    std::span<const ExtractedSequence> sequences,
    const PublicVocabulary& vocab, const EmbeddingTable& table,
    std::span<const BlockGeometry> geometries);

struct EnsembleOptions {
  int max_length = 10;
  Epsilon epsilon;
  int num_features = 2000;
  uint64_t seed = 0;
  NoiseControl noise;
};

class KdeEnsemble {
 public:
  // Reassembles an ensemble from its sketches, checking that they match the
  // geometries `kind` prescribes for `max_length`.
  static absl::StatusOr<KdeEnsemble> FromSketches(
      EnsembleKind kind, int max_length, std::vector<DpKdeSketch> sketches);

  EnsembleKind kind() const { return kind_; }
  int max_length() const { return max_length_; }
  const std::vector<DpKdeSketch>& sketches() const { return sketches_; }
  Epsilon total_epsilon() const;

  // Index of the sketch answering prefixes of length `prefix_len`.
  absl::StatusOr<int> Route(int prefix_len) const;

 private:
  EnsembleKind kind_ = EnsembleKind::kIndependent;
  int max_length_ = 0;
  std::vector<DpKdeSketch> sketches_;
};

// Builds every sketch of `kind`; the budget is split exactly across sketches.
// The independent kind ignores max_length beyond validation.
absl::StatusOr<KdeEnsemble> BuildEnsemble(
    EnsembleKind kind, std::span<const ExtractedSequence> sequences,
    const PublicVocabulary& vocab, const EmbeddingTable& table,
    const EnsembleOptions& options);

inline absl::StatusOr<KdeEnsemble> BuildLinearEnsemble(
    std::span<const ExtractedSequence> sequences,
    const PublicVocabulary& vocab, const EmbeddingTable& table,
    const EnsembleOptions& options) {
  return BuildEnsemble(EnsembleKind::kLinear, sequences, vocab, table, options);
}

inline absl::StatusOr<KdeEnsemble> BuildLogEnsemble(
    std::span<const ExtractedSequence> sequences,
    const PublicVocabulary& vocab, const EmbeddingTable& table,
    const EnsembleOptions& options) {
  return BuildEnsemble(EnsembleKind::kLogarithmic, sequences, vocab, table,
                       options);
}

// Scores a keyphrase prefix: embeds it at the routed sketch's u, pads to the
// sketch's block count and applies the padding blowup.
absl::StatusOr<KdeEstimate> EnsembleQuery(
    const KdeEnsemble& ensemble, std::span<const std::string> prefix_terms,
    const EmbeddingTable& table);

}  // namespace dpkps

#endif  // DPKPS_KDE_ENSEMBLE_H_
