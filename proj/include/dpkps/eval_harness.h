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

#ifndef DPKPS_EVAL_HARNESS_H_
#define DPKPS_EVAL_HARNESS_H_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "dpkps/corpus_io.h"
#include "dpkps/embedding_store.h"
#include "dpkps/pipeline.h"
#include "dpkps/sequence_sampler.h"

namespace dpkps {

// A labeled toy corpus with controllable class structure.
struct ToyCorpusSpec {
  int num_classes = 2;
  int docs_per_class = 500;
  // Extra documents per class returned separately as held-out test material.
  int held_out_per_class = 0;
  // Explicit pools, one per class. When empty, pools of `pool_size` terms are
  // generated: disjoint ("c<class>t<i>") or, with shared_terms > 0, with that
  // many terms ("shared<i>") common to every class.
  std::vector<std::vector<std::string>> class_term_pools;
  int pool_size = 50;
  int shared_terms = 0;
  int terms_per_doc = 10;
  // (a, b): every occurrence of a is immediately followed by b.
  std::vector<std::pair<std::string, std::string>> co_occurrence_pairs;
  bool with_replacement = false;
  int embedding_dim = 16;
  uint64_t seed = 0;
  // Defaults to "class<i>".
  std::vector<std::string> labels;

  static absl::StatusOr<ToyCorpusSpec> FromJson(const std::string& text);
};

struct ToyCorpus {
  std::vector<Document> documents;
  std::vector<Document> held_out;
  // Every pool term, single-word.
  PublicVocabulary vocab;
  // Seeded random unit vectors for every pool term.
  EmbeddingTable table;
};

absl::StatusOr<ToyCorpus> SynthCorpus(const ToyCorpusSpec& spec);

// The first `limit` vocabulary terms of each document as a labeled sequence.
std::vector<KeyphraseSequence> SequencesFromDocuments(
    std::span<const Document> docs, const PublicVocabulary& vocab, int limit);

struct EvalReport {
  double accuracy = 0;
  // Sorted; index = class id.
  std::vector<std::string> labels;
  std::vector<double> per_class_accuracy;
  // confusion[true][predicted].
  std::vector<std::vector<int64_t>> confusion;
  int64_t test_count = 0;
  // Free-form (key, value) echo of the configuration.
  std::vector<std::pair<std::string, std::string>> config;

  std::string ToJson() const;
};

// Nearest centroid over mean unit embeddings. Ties go to the lowest class id.
absl::StatusOr<EvalReport> CentroidClassify(
    std::span<const KeyphraseSequence> train,
    std::span<const KeyphraseSequence> test, const EmbeddingTable& table);

struct EvalGrid {
  std::vector<SamplingMode> modes;
  // (eps_voc, eps_kde) pairs.
  std::vector<std::pair<Epsilon, Epsilon>> budgets;
  // Everything else; epsilons and the sampling mode are overridden per cell.
  PipelineConfig base;
  // Cells evaluated concurrently.
  int num_threads = 4;

  static absl::StatusOr<EvalGrid> FromJson(const std::string& text);
};

struct ComparisonTable {
  // Row-major over modes x budgets.
  std::vector<EvalReport> reports;

  std::string ToJson() const;
  std::string ToText() const;
};

// Runs the pipeline per cell on `corpus.documents`, fits centroids on the
// generated sequences and scores them on the held-out documents. Cell seeds
// are derived from the base seeds and the cell index.
absl::StatusOr<ComparisonTable> CompareModes(const ToyCorpus& corpus,
                                             const EvalGrid& grid);

}  // namespace dpkps

#endif  // DPKPS_EVAL_HARNESS_H_
