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

#include "dpkps/vocab_privatizer.h"

#include <algorithm>
#include <numeric>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "dpkps/status_macros.h"

namespace dpkps {

absl::StatusOr<std::vector<int64_t>> BuildHistogram(
    std::span<const ExtractedSequence> sequences, int vocab_size) {
  std::vector<int64_t> counts(vocab_size, 0);
  for (const ExtractedSequence& seq : sequences) {
    for (TermId id : seq.term_ids) {
      if (id < 0 || id >= vocab_size) {
        return absl::OutOfRangeError(absl::StrCat(
            "term id ", id, " in document \"", seq.doc_id,
            "\" is outside a vocabulary of size ", vocab_size));
      }
      ++counts[id];
    }
  }
  return counts;
}

absl::StatusOr<NoisyHistogram> PrivatizeHistogram(
    std::span<const int64_t> counts, int s_per_doc, Epsilon epsilon, Rng& rng) {
  if (epsilon.micros() <= 0) {
    return absl::InvalidArgumentError("epsilon_voc must be > 0");
  }
  if (s_per_doc < 1) {
    return absl::InvalidArgumentError("S (terms per document) must be >= 1");
  }
  NoisyHistogram hist;
  hist.epsilon = epsilon;
  hist.s_per_doc = s_per_doc;
  const double scale = s_per_doc / epsilon.value();
  hist.counts.reserve(counts.size());
  for (int64_t c : counts) {
    hist.counts.push_back(static_cast<double>(c) + rng.Laplace(scale));
  }
  return hist;
}

PrivatizedVocabulary SelectTopN(const NoisyHistogram& hist,
                                const PublicVocabulary& vocab, int n) {
  std::vector<TermId> order(hist.counts.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t keep = std::min<size_t>(std::max(n, 0), order.size());
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](TermId a, TermId b) {
                      if (hist.counts[a] != hist.counts[b]) {
                        return hist.counts[a] > hist.counts[b];
                      }
                      return a < b;
                    });
  order.resize(keep);

  PrivatizedVocabulary out;
  out.epsilon = hist.epsilon;
  out.requested_size = n;
  out.terms.reserve(keep);
  for (TermId id : order) out.terms.push_back(vocab.term(id));
  out.term_ids = std::move(order);
  return out;
}

absl::StatusOr<PrivatizedVocabulary> PrivatizeVocabulary(
    std::span<const ExtractedSequence> sequences,
    const PublicVocabulary& vocab, const VocabPrivatizerOptions& options,
    Rng& rng) {
  if (options.size < 1) {
    return absl::InvalidArgumentError("vocabulary size N must be >= 1");
  }
  for (const ExtractedSequence& seq : sequences) {
    if (static_cast<int>(seq.term_ids.size()) > options.s_per_doc) {
      return absl::InvalidArgumentError(absl::StrCat(
          "document \"", seq.doc_id, "\" contributes ", seq.term_ids.size(),
          " terms; the sensitivity bound assumes at most S=",
          options.s_per_doc));
    }
  }
  DPKPS_ASSIGN_OR_RETURN(std::vector<int64_t> counts,
                         BuildHistogram(sequences, vocab.size()));
  DPKPS_ASSIGN_OR_RETURN(
      NoisyHistogram hist,
      PrivatizeHistogram(counts, options.s_per_doc, options.epsilon, rng));
  return SelectTopN(hist, vocab, options.size);
}

}  // namespace dpkps
