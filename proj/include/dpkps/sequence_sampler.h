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

#ifndef DPKPS_SEQUENCE_SAMPLER_H_
#define DPKPS_SEQUENCE_SAMPLER_H_

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "dpkps/corpus_io.h"
#include "dpkps/dp_kde.h"
#include "dpkps/embedding_store.h"
#include "dpkps/kde_ensemble.h"
#include "dpkps/random.h"
#include "dpkps/vocab_privatizer.h"

namespace dpkps {

// A probability vector over the candidate vocabulary.
struct ScoreVector {
  std::vector<double> probs;
};

// Clamps every score to at least `floor` (> 0) and normalizes. Non-finite
// scores are treated as the floor; an input with no finite score is an error.
absl::StatusOr<ScoreVector> ScoreToDistribution(std::span<const double> raw,
                                                double floor);

// Floor as a fraction of the largest score.
inline constexpr double kRelativeScoreFloor = 1e-6;

// ScoreToDistribution with floor = kRelativeScoreFloor * max(raw). When no
// score is positive the result is uniform.
absl::StatusOr<ScoreVector> ScoresToSamplingDistribution(
    std::span<const double> raw);

// Inverse-CDF draw of an index from `dist`.
int SampleIndex(const ScoreVector& dist, Rng& rng);

enum class StrategyKind { kGreedy, kMultinomial, kTopK };

struct SelectionStrategy {
  StrategyKind kind = StrategyKind::kMultinomial;
  int top_k = 50;

  // "greedy", "multinomial", "topk" or "topk:K".
  static absl::StatusOr<SelectionStrategy> Parse(std::string_view text);
  std::string ToString() const;
};

// A released keyphrase sequence. `sampler` and `seed` record how it was
// drawn; a sequence without a sampler tag was not produced by this module.
struct KeyphraseSequence {
  std::vector<std::string> terms;
  std::string label;
  std::string sampler;
  uint64_t seed = 0;
};

// Sequence files: one {"label", "terms", "seed", "sampler"} object per line.
// Lines without a sampler tag are rejected.
void WriteSequences(std::span<const KeyphraseSequence> sequences,
                    std::ostream& out);
absl::StatusOr<std::vector<KeyphraseSequence>> ParseSequences(std::istream& in);
absl::StatusOr<std::vector<KeyphraseSequence>> LoadSequences(
    const std::string& path);

// The privatized vocabulary restricted to terms with embeddings, with the
// embeddings gathered into one |V| x d matrix.
class CandidateSet {
 public:
  // Terms without an embedding are dropped and counted in dropped().
  static absl::StatusOr<CandidateSet> Create(const PrivatizedVocabulary& vocab,
                                             const EmbeddingTable& table);

  int size() const { return static_cast<int>(terms_.size()); }
  const std::string& term(int i) const { return terms_[i]; }
  TermId id(int i) const { return ids_[i]; }
  const std::vector<std::string>& terms() const { return terms_; }
  const RowMatrix& embeddings() const { return embeddings_; }
  int dropped() const { return dropped_; }

 private:
  std::vector<std::string> terms_;
  std::vector<TermId> ids_;
  RowMatrix embeddings_;
  int dropped_ = 0;
};

// Scores every candidate appended to a prefix in one pass per step. Feature
// projections of the candidates are precomputed for each step, so a step
// costs O(|V| I) instead of O(|V| I d l).
class PrefixScorer {
 public:
  static absl::StatusOr<PrefixScorer> Create(const KdeEnsemble& ensemble,
                                             const CandidateSet& candidates);

  // DP-KDE estimates of prefix + w for every candidate w, in candidate
  // order. `prefix` holds candidate indices; its length must be < L.
  absl::StatusOr<std::vector<double>> ScoreExtensions(
      std::span<const int> prefix) const;

  int max_length() const { return static_cast<int>(steps_.size()); }

 private:
  struct Step {
    int sketch = 0;
    double sqrt_u = 0;
    double blowup = 1;
    // |V| x I: <omega_i restricted to block (l-1), e_w>.
    RowMatrix candidate_phase;
  };

  const KdeEnsemble* ensemble_ = nullptr;
  const CandidateSet* candidates_ = nullptr;
  std::vector<Step> steps_;
};

struct SamplerOptions {
  int length = 10;
  int count = 1;
  uint64_t seed = 0;
  SelectionStrategy strategy;
  std::string label;
  // Sequences use per-index derived seeds, so output does not depend on this.
  int num_threads = 1;
};

struct SampleResult {
  std::vector<KeyphraseSequence> sequences;
  // Number of DP-KDE point evaluations performed.
  int64_t kde_queries = 0;
};

// Scores each candidate once on the k=1 sketch and draws count x L terms
// i.i.d. from the resulting distribution. The strategy is ignored.
absl::StatusOr<SampleResult> SampleIndependent(const DpKdeSketch& sketch,
                                               const CandidateSet& candidates,
                                               const SamplerOptions& options);

// Extends each sequence one term at a time, scoring all |V| extensions of the
// current prefix on the ensemble and selecting by the strategy.
absl::StatusOr<SampleResult> SampleIterative(const KdeEnsemble& ensemble,
                                             const CandidateSet& candidates,
                                             const SamplerOptions& options);

}  // namespace dpkps

#endif  // DPKPS_SEQUENCE_SAMPLER_H_
