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

#ifndef DPKPS_VOCAB_PRIVATIZER_H_
#define DPKPS_VOCAB_PRIVATIZER_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "dpkps/corpus_io.h"
#include "dpkps/epsilon.h"
#include "dpkps/random.h"

namespace dpkps {

// Laplace-noised term counts over the whole public vocabulary, indexed by
// TermId. Every entry carries noise, including terms never observed.
struct NoisyHistogram {
  std::vector<double> counts;
  Epsilon epsilon;
  int s_per_doc = 0;
};

// The released top-N vocabulary, ordered by descending noisy count.
struct PrivatizedVocabulary {
  std::vector<TermId> term_ids;
  std::vector<std::string> terms;
  Epsilon epsilon;
  int requested_size = 0;

  int size() const { return static_cast<int>(term_ids.size()); }
};

// Raw occurrence counts (dense, indexed by TermId).
absl::StatusOr<std::vector<int64_t>> BuildHistogram(
    std::span<const ExtractedSequence> sequences, int vocab_size);

// Adds i.i.d. Laplace(S / epsilon) noise to every count. One document moves at
// most S counts by one each, so the release is epsilon-DP.
absl::StatusOr<NoisyHistogram> PrivatizeHistogram(
    std::span<const int64_t> counts, int s_per_doc, Epsilon epsilon, Rng& rng);

// The `n` ids with the largest noisy counts; ties go to the smaller id.
// Post-processing only, no additional privacy cost.
PrivatizedVocabulary SelectTopN(const NoisyHistogram& hist,
                                const PublicVocabulary& vocab, int n);

struct VocabPrivatizerOptions {
  int s_per_doc = 10;
  int size = 1000;
  Epsilon epsilon;
};

// Full release: checks that no sequence exceeds S terms, counts, noises and
// selects. `rng` is consumed once per vocabulary term.
absl::StatusOr<PrivatizedVocabulary> PrivatizeVocabulary(
    std::span<const ExtractedSequence> sequences,
    const PublicVocabulary& vocab, const VocabPrivatizerOptions& options,
    Rng& rng);

}  // namespace dpkps

#endif  // DPKPS_VOCAB_PRIVATIZER_H_
