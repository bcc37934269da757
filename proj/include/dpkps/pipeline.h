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

#ifndef DPKPS_PIPELINE_H_
#define DPKPS_PIPELINE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpkps/corpus_io.h"
#include "dpkps/dp_kde.h"
#include "dpkps/embedding_store.h"
#include "dpkps/epsilon.h"
#include "dpkps/kde_ensemble.h"
#include "dpkps/privacy_accountant.h"
#include "dpkps/sequence_sampler.h"
#include "dpkps/vocab_privatizer.h"

namespace dpkps {

enum class SamplingMode { kIndependent, kIterative };

std::string_view SamplingModeName(SamplingMode mode);
absl::StatusOr<SamplingMode> ParseSamplingMode(std::string_view name);

// Ledger mechanism names.
inline constexpr char kVocabularyMechanism[] = "vocabulary";
std::string SketchMechanismName(const BlockGeometry& geometry);

struct BuildConfig {
  int s_per_doc = 10;
  int vocab_size = 1000;
  Epsilon eps_voc = Epsilon::FromMicros(1'000'000);
  Epsilon eps_kde = Epsilon::FromMicros(5'000'000);
  EnsembleKind ensemble = EnsembleKind::kLogarithmic;
  int max_length = 10;
  int num_features = 2000;
  uint64_t seed = 0;
  std::optional<Epsilon> cap;
  NoiseControl noise;
};

struct SampleConfig {
  SamplingMode mode = SamplingMode::kIterative;
  SelectionStrategy strategy;
  int length = 10;
  int count_per_class = 1500;
  uint64_t seed = 0;
  int num_threads = 1;
};

struct PipelineConfig {
  BuildConfig build;
  SampleConfig sample;
};

struct ClassModel {
  std::string label;
  int documents = 0;
  KdeEnsemble ensemble;
};

// Everything released by the private stages, and nothing else.
struct ReleasedModel {
  PrivatizedVocabulary vocab;
  // Embeddings of the released terms only.
  EmbeddingTable table;
  // Sorted by label.
  std::vector<ClassModel> classes;
  BudgetLedger ledger;
  int s_per_doc = 0;
};

// Extraction followed by the noisy top-N vocabulary; charges eps_voc first.
absl::StatusOr<PrivatizedVocabulary> PrivatizeCorpusVocabulary(
    std::span<const ExtractedSequence> extracted, const PublicVocabulary& vocab,
    const BuildConfig& config, BudgetLedger& ledger);

// Embeddings of the released terms that have one, in release order.
absl::StatusOr<EmbeddingTable> RestrictToReleased(
    const PrivatizedVocabulary& released, const EmbeddingTable& table);

// Restricts each sequence to the released terms that have an embedding.
std::vector<ExtractedSequence> FilterToReleased(
    std::span<const ExtractedSequence> extracted,
    const PrivatizedVocabulary& released, const EmbeddingTable& table);

// One ensemble per class label over that class's documents. The classes
// partition the data, so each sketch's share of eps_kde is charged once,
// annotated with the class list.
absl::StatusOr<std::vector<ClassModel>> BuildClassEnsembles(
    std::span<const ExtractedSequence> extracted, const PublicVocabulary& vocab,
    const PrivatizedVocabulary& released, const EmbeddingTable& table,
    const BuildConfig& config, BudgetLedger& ledger);

absl::StatusOr<ReleasedModel> BuildModel(std::span<const Document> docs,
                                         const PublicVocabulary& vocab,
                                         const EmbeddingTable& table,
                                         const BuildConfig& config);

// Fails unless the ledger accounts for the vocabulary and for every sketch
// of every class ensemble, with matching epsilons.
absl::Status CheckLedgerConsistency(const ReleasedModel& model);

// Sequences for every class, in label order. Independent mode draws from the
// k=1 sketch of each ensemble.
absl::StatusOr<SampleResult> SampleSequences(const ReleasedModel& model,
                                             const SampleConfig& config);

struct PipelineRun {
  ReleasedModel model;
  std::vector<KeyphraseSequence> sequences;
  int64_t kde_queries = 0;
};

// BuildModel then SampleSequences. Independent mode always builds
// independent ensembles so the whole of eps_kde goes to the k=1 sketch.
absl::StatusOr<PipelineRun> RunPipeline(std::span<const Document> docs,
                                        const PublicVocabulary& vocab,
                                        const EmbeddingTable& table,
                                        const PipelineConfig& config);

// Run directory layout:
//   manifest.json   ensemble kind, L, per-class per-sketch (k, u, eps, I,
//                   feature seed, path) and the released vocabulary record
//   vocab.txt       released terms, one per line
//   embeddings.txt  their embeddings
//   sketches/       one JSON artifact per sketch
//   budget.json     the ledger
absl::Status SaveModel(const ReleasedModel& model, const std::string& dir);
absl::StatusOr<ReleasedModel> LoadModel(const std::string& dir);

// Released vocabulary files written by `privatize-vocab`: the terms file and
// "<path>.manifest.json" with epsilon, S, N, the seed and the term ids.
absl::Status SavePrivatizedVocabulary(const PrivatizedVocabulary& released,
                                      int s_per_doc, uint64_t seed,
                                      const std::string& path);
struct LoadedVocabulary {
  PrivatizedVocabulary released;
  int s_per_doc = 0;
};
absl::StatusOr<LoadedVocabulary> LoadPrivatizedVocabulary(
    const std::string& path, const PublicVocabulary& vocab);

}  // namespace dpkps

#endif  // DPKPS_PIPELINE_H_
