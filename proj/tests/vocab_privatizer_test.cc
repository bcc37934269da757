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

#include <cmath>
#include <cstdlib>
#include <vector>

#include "dpkps/random.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"

namespace dpkps {
namespace {

using ::testing::ElementsAre;

Epsilon Eps(double v) { return *Epsilon::FromDouble(v); }

PublicVocabulary Vocab(const std::vector<std::string>& terms) {
  return *PublicVocabulary::FromTerms(terms, 2);
}

ExtractedSequence Seq(std::vector<TermId> ids, std::string doc = "d") {
  return ExtractedSequence{.doc_id = std::move(doc),
                           .term_ids = std::move(ids),
                           .label = ""};
}

TEST(BuildHistogramTest, DirectCount) {
  // Two documents each contributing [heart, rate].
  std::vector<ExtractedSequence> seqs = {Seq({0, 1}), Seq({0, 1})};
  auto h = BuildHistogram(seqs, 3);
  ASSERT_TRUE(h.ok());
  EXPECT_THAT(*h, ElementsAre(2, 2, 0));
}

TEST(BuildHistogramTest, NoDocumentsAllZero) {
  auto h = BuildHistogram({}, 4);
  ASSERT_TRUE(h.ok());
  EXPECT_THAT(*h, ElementsAre(0, 0, 0, 0));
}

TEST(BuildHistogramTest, OutOfRangeId) {
  std::vector<ExtractedSequence> seqs = {Seq({5})};
  EXPECT_EQ(BuildHistogram(seqs, 3).status().code(),
            absl::StatusCode::kOutOfRange);
}

TEST(BuildHistogramTest, TotalBoundedBySTimesDocs) {
  Rng rng(1);
  const int s = 10, docs = 8000, v = 500;
  std::vector<ExtractedSequence> seqs;
  for (int d = 0; d < docs; ++d) {
    std::vector<TermId> ids;
    const int len = static_cast<int>(rng.UniformIndex(s + 1));
    for (int i = 0; i < len; ++i) ids.push_back(rng.UniformIndex(v));
    seqs.push_back(Seq(ids));
  }
  auto h = BuildHistogram(seqs, v);
  ASSERT_TRUE(h.ok());
  int64_t total = 0;
  for (int64_t c : *h) total += c;
  EXPECT_LE(total, static_cast<int64_t>(s) * docs);
}

TEST(BuildHistogramTest, DropOneDocumentMovesAtMostS) {
  // Brute force over every drop-one neighbour of small random corpora.
  Rng rng(2);
  const int s = 4, v = 6;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ExtractedSequence> seqs;
    for (int d = 0; d < 7; ++d) {
      std::vector<TermId> ids;
      const int len = static_cast<int>(rng.UniformIndex(s + 1));
      for (int i = 0; i < len; ++i) ids.push_back(rng.UniformIndex(v));
      seqs.push_back(Seq(ids));
    }
    const auto full = *BuildHistogram(seqs, v);
    for (size_t drop = 0; drop < seqs.size(); ++drop) {
      std::vector<ExtractedSequence> nb = seqs;
      nb.erase(nb.begin() + drop);
      const auto h = *BuildHistogram(nb, v);
      int64_t l1 = 0;
      for (int i = 0; i < v; ++i) l1 += std::llabs(full[i] - h[i]);
      ASSERT_LE(l1, s);
    }
  }
}

TEST(PrivatizeHistogramTest, NoiseOnEveryTermIncludingZeros) {
  std::vector<int64_t> counts(1000, 0);
  Rng rng(3);
  auto h = PrivatizeHistogram(counts, 10, Eps(1), rng);
  ASSERT_TRUE(h.ok());
  int untouched = 0;
  for (double c : h->counts) untouched += c == 0.0;
  EXPECT_EQ(untouched, 0);
  EXPECT_EQ(h->s_per_doc, 10);
  EXPECT_EQ(h->epsilon, Eps(1));
}

TEST(PrivatizeHistogramTest, VarianceMatchesTwoBSquared) {
  // S=10, eps=1: b=10, variance 200.
  std::vector<int64_t> counts(100000, 7);
  Rng rng(4);
  auto h = PrivatizeHistogram(counts, 10, Eps(1), rng);
  ASSERT_TRUE(h.ok());
  double s = 0, s2 = 0;
  for (double c : h->counts) {
    s += c - 7;
    s2 += (c - 7) * (c - 7);
  }
  const double n = h->counts.size();
  const double mean = s / n;
  EXPECT_NEAR(s2 / n - mean * mean, 200.0, 10.0);
}

TEST(PrivatizeHistogramTest, ScaleIsSOverEpsilon) {
  // S=10, eps=5: b=2, so E|noise| = 2.
  std::vector<int64_t> counts(100000, 0);
  Rng rng(5);
  auto h = PrivatizeHistogram(counts, 10, Eps(5), rng);
  ASSERT_TRUE(h.ok());
  double abs_sum = 0;
  for (double c : h->counts) abs_sum += std::abs(c);
  EXPECT_NEAR(abs_sum / counts.size(), 2.0, 0.04);
}

TEST(PrivatizeHistogramTest, HugeEpsilonNearlyExact) {
  std::vector<int64_t> counts = {5, 0, 12, 3};
  Rng rng(6);
  auto h = PrivatizeHistogram(counts, 10, Eps(1e6), rng);
  ASSERT_TRUE(h.ok());
  for (size_t i = 0; i < counts.size(); ++i) {
    EXPECT_NEAR(h->counts[i], counts[i], 1e-3);
  }
}

TEST(PrivatizeHistogramTest, RejectsBadParameters) {
  std::vector<int64_t> counts = {1};
  Rng rng(7);
  EXPECT_FALSE(PrivatizeHistogram(counts, 10, Epsilon(), rng).ok());
  EXPECT_FALSE(PrivatizeHistogram(counts, 0, Eps(1), rng).ok());
}

TEST(PrivatizeHistogramTest, SeededRunsAreBitIdentical) {
  std::vector<int64_t> counts(100, 3);
  Rng a(8), b(8);
  EXPECT_EQ(PrivatizeHistogram(counts, 10, Eps(1), a)->counts,
            PrivatizeHistogram(counts, 10, Eps(1), b)->counts);
}

TEST(SelectTopNTest, TieBrokenByAscendingId) {
  const PublicVocabulary vocab = Vocab({"a", "b", "c"});
  NoisyHistogram hist{.counts = {3.2, 1.1, 3.2}, .epsilon = Eps(1),
                      .s_per_doc = 10};
  const PrivatizedVocabulary top = SelectTopN(hist, vocab, 2);
  EXPECT_THAT(top.terms, ElementsAre("a", "c"));
  EXPECT_THAT(top.term_ids, ElementsAre(0, 2));
  EXPECT_EQ(top.epsilon, Eps(1));
}

TEST(SelectTopNTest, SaturatesAtVocabularySize) {
  const PublicVocabulary vocab = Vocab({"a", "b", "c"});
  NoisyHistogram hist{.counts = {-1.0, 5.0, 2.0}, .epsilon = Eps(1),
                      .s_per_doc = 1};
  const PrivatizedVocabulary top = SelectTopN(hist, vocab, 10);
  EXPECT_THAT(top.terms, ElementsAre("b", "c", "a"));
  EXPECT_EQ(top.requested_size, 10);
}

TEST(SelectTopNTest, ExactSizeN) {
  std::vector<std::string> terms;
  for (int i = 0; i < 5000; ++i) terms.push_back("t" + std::to_string(i));
  const PublicVocabulary vocab = Vocab(terms);
  std::vector<int64_t> counts(5000, 0);
  Rng rng(9);
  auto hist = PrivatizeHistogram(counts, 10, Eps(1), rng);
  EXPECT_EQ(SelectTopN(*hist, vocab, 1000).size(), 1000);
}

TEST(PrivatizeVocabularyTest, RecoversFrequentTermsAtLowNoise) {
  const PublicVocabulary vocab = Vocab({"a", "b", "c", "d", "e"});
  std::vector<ExtractedSequence> seqs;
  for (int i = 0; i < 200; ++i) seqs.push_back(Seq({1, 3}));
  Rng rng(10);
  auto top = PrivatizeVocabulary(
      seqs, vocab, {.s_per_doc = 2, .size = 2, .epsilon = Eps(1)}, rng);
  ASSERT_TRUE(top.ok()) << top.status();
  EXPECT_THAT(top->terms, ElementsAre("b", "d"));
}

TEST(PrivatizeVocabularyTest, RejectsSequencesLongerThanS) {
  const PublicVocabulary vocab = Vocab({"a", "b"});
  std::vector<ExtractedSequence> seqs = {Seq({0, 1, 0})};
  Rng rng(11);
  EXPECT_FALSE(PrivatizeVocabulary(
                   seqs, vocab, {.s_per_doc = 2, .size = 1, .epsilon = Eps(1)},
                   rng)
                   .ok());
}

}  // namespace
}  // namespace dpkps
