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

#ifndef DPKPS_CORPUS_IO_H_
#define DPKPS_CORPUS_IO_H_

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "absl/container/flat_hash_map.h"
#include "absl/status/statusor.h"

namespace dpkps {

using TermId = int32_t;

// One private record. Dropping a whole Document is the adjacency relation
// every privacy guarantee in this library is stated against.
struct Document {
  std::string id;
  std::string text;
  std::string label;
};

// Flat public term list. Terms are normalized with the same tokenizer used
// for documents, so "Beta-Blocker," and "beta-blocker" are the same term.
class PublicVocabulary {
 public:
  PublicVocabulary() = default;

  // Normalizes, drops empty entries and deduplicates keeping the first
  // occurrence. A term with more than `max_words` words is an error.
  static absl::StatusOr<PublicVocabulary> FromTerms(
      const std::vector<std::string>& terms, int max_words);

  int size() const { return static_cast<int>(terms_.size()); }
  int max_words() const { return max_words_; }
  const std::string& term(TermId id) const { return terms_[id]; }
  const std::vector<std::string>& terms() const { return terms_; }
  std::optional<TermId> Find(std::string_view normalized_term) const;

 private:
  std::vector<std::string> terms_;
  absl::flat_hash_map<std::string, TermId> index_;
  int max_words_ = 1;
};

struct ExtractedSequence {
  std::string doc_id;
  std::vector<TermId> term_ids;
  std::string label;
};

// Splits on Unicode whitespace, strips leading/trailing ASCII punctuation from
// each token, lowercases ASCII letters and drops tokens that end up empty.
std::vector<std::string> Tokenize(std::string_view text);

// Corpus files hold one JSON object per line: {"id", "text", "label"}.
absl::StatusOr<std::vector<Document>> ParseCorpus(std::istream& in);
absl::StatusOr<std::vector<Document>> LoadCorpus(const std::string& path);
void WriteCorpus(const std::vector<Document>& docs, std::ostream& out);

// Vocabulary files hold one phrase per line.
absl::StatusOr<PublicVocabulary> ParseVocabulary(std::istream& in,
                                                 int max_words);
absl::StatusOr<PublicVocabulary> LoadVocabulary(const std::string& path,
                                                int max_words);

// Greedy longest-match tagging: at each token position the longest vocabulary
// phrase (up to max_words tokens) starting there wins and the scan resumes
// after it. Returns the first `limit` matches in text order; repeated terms
// each take a slot.
ExtractedSequence ExtractTerms(const Document& doc,
                               const PublicVocabulary& vocab, int limit);

// Extracted-sequence files: one {"id", "label", "terms": [...]} per line,
// terms written as strings.
void WriteExtracted(const std::vector<ExtractedSequence>& sequences,
                    const PublicVocabulary& vocab, std::ostream& out);

// Reads an extracted-sequence file, mapping each term through `vocab`.
// Terms absent from `vocab` are an error unless `drop_unknown` is set, in
// which case they are removed and the remaining order kept.
absl::StatusOr<std::vector<ExtractedSequence>> ParseExtracted(
    std::istream& in, const PublicVocabulary& vocab, bool drop_unknown);
absl::StatusOr<std::vector<ExtractedSequence>> LoadExtracted(
    const std::string& path, const PublicVocabulary& vocab, bool drop_unknown);

}  // namespace dpkps

#endif  // DPKPS_CORPUS_IO_H_
