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

#include <cmath>
#include <string>
#include <vector>

#include "dpkps/random.h"
#include "dpkps/testing/noise_control.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "oracles.h"

namespace dpkps {
namespace {

Epsilon Eps(double v) { return *Epsilon::FromDouble(v); }

struct Fixture {
  PublicVocabulary vocab;
  EmbeddingTable table;
  std::vector<ExtractedSequence> sequences;
  std::vector<std::vector<std::string>> docs;
};

// `num_terms` single-word terms with random embeddings and `num_docs`
// documents of 1..4 terms each.
Fixture MakeFixture(int num_terms, int num_docs, int dim, uint64_t seed) {
  Fixture f;
  Rng rng(seed);
  std::vector<std::string> terms;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (int i = 0; i < num_terms; ++i) {
    terms.push_back("t" + std::to_string(i));
    std::vector<double> v(dim);
    for (double& x : v) x = rng.Normal();
    rows.emplace_back(terms.back(), v);
  }
  f.vocab = *PublicVocabulary::FromTerms(terms, 1);
  f.table = *EmbeddingTable::Create(dim, rows);
  for (int d = 0; d < num_docs; ++d) {
    ExtractedSequence seq;
    seq.doc_id = "d" + std::to_string(d);
    seq.label = "x";
    const int len = 1 + static_cast<int>(rng.UniformIndex(4));
    std::vector<std::string> doc;
    for (int j = 0; j < len; ++j) {
      const TermId id = static_cast<TermId>(rng.UniformIndex(num_terms));
      seq.term_ids.push_back(id);
      doc.push_back(terms[id]);
    }
    f.sequences.push_back(seq);
    f.docs.push_back(doc);
  }
  return f;
}

TEST(EnsembleGeometriesTest, Linear) {
  const auto g = EnsembleGeometries(EnsembleKind::kLinear, 10, 3);
  ASSERT_EQ(g.size(), 10u);
  for (int k = 1; k <= 10; ++k) {
    EXPECT_EQ(g[k - 1].num_blocks, k);
    EXPECT_EQ(g[k - 1].block_dim, 3);
    EXPECT_DOUBLE_EQ(g[k - 1].block_sq_norm, 1.0 / k);
  }
}

TEST(EnsembleGeometriesTest, Logarithmic) {
  const auto g = EnsembleGeometries(EnsembleKind::kLogarithmic, 10, 3);
  ASSERT_EQ(g.size(), 5u);
  const int ks[] = {1, 2, 4, 8, 16};
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(g[i].num_blocks, ks[i]);
    EXPECT_DOUBLE_EQ(g[i].block_sq_norm, ks[i] == 1 ? 1.0 : 2.0 / ks[i]);
  }
  EXPECT_EQ(EnsembleGeometries(EnsembleKind::kLogarithmic, 1, 3).size(), 1u);
  EXPECT_EQ(EnsembleGeometries(EnsembleKind::kLogarithmic, 2, 3).size(), 2u);
  EXPECT_EQ(EnsembleGeometries(EnsembleKind::kLogarithmic, 8, 3).size(), 4u);
  EXPECT_EQ(EnsembleGeometries(EnsembleKind::kLogarithmic, 9, 3).size(), 5u);
}

TEST(EnsembleGeometriesTest, Independent) {
  const auto g = EnsembleGeometries(EnsembleKind::kIndependent, 10, 3);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].num_blocks, 1);
  EXPECT_DOUBLE_EQ(g[0].block_sq_norm, 1.0);
}

TEST(EnsembleKindTest, NamesRoundTrip) {
  for (EnsembleKind k : {EnsembleKind::kIndependent, EnsembleKind::kLinear,
                         EnsembleKind::kLogarithmic}) {
    EXPECT_EQ(*ParseEnsembleKind(EnsembleKindName(k)), k);
  }
  EXPECT_FALSE(ParseEnsembleKind("cubic").ok());
}

TEST(BuildPrefixDatasetsTest, CyclesShortDocuments) {
  Fixture f = MakeFixture(5, 0, 3, 1);
  ExtractedSequence seq{"d", {2, 4}, "x"};
  ExtractedSequence empty{"e", {}, "x"};
  const std::vector<ExtractedSequence> seqs = {seq, empty};
  const std::vector<BlockGeometry> g = {{3, 5, 0.2}};
  auto out = BuildPrefixDatasets(seqs, f.vocab, f.table, g);
  ASSERT_TRUE(out.ok()) << out.status();
  EXPECT_EQ(out->skipped_documents, 1);
  const RowMatrix& m = out->datasets[0].vectors;
  ASSERT_EQ(m.rows(), 1);
  const int expected_terms[] = {2, 4, 2, 4, 2};
  for (int b = 0; b < 5; ++b) {
    auto v = *f.table.Vector("t" + std::to_string(expected_terms[b]));
    double sq = 0;
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(m(0, b * 3 + j), std::sqrt(0.2) * v[j], 1e-15);
      sq += m(0, b * 3 + j) * m(0, b * 3 + j);
    }
    EXPECT_NEAR(sq, 0.2, 1e-14);
  }
}

TEST(BuildPrefixDatasetsTest, MissingEmbeddingIsNotFound) {
  auto vocab = *PublicVocabulary::FromTerms({"a", "b"}, 1);
  auto table = *EmbeddingTable::Create(2, {{"a", {1, 0}}});
  const std::vector<ExtractedSequence> seqs = {{"d", {1}, "x"}};
  const std::vector<BlockGeometry> g = {{2, 1, 1.0}};
  auto out = BuildPrefixDatasets(seqs, vocab, table, g);
  EXPECT_EQ(out.status().code(), absl::StatusCode::kNotFound);
  EXPECT_THAT(out.status().message(), ::testing::HasSubstr("\"b\""));
}

TEST(KdeEnsembleTest, BudgetSplitsEvenly) {
  Fixture f = MakeFixture(6, 40, 4, 2);
  EnsembleOptions o;
  o.max_length = 10;
  o.epsilon = Eps(5);
  o.num_features = 50;
  o.seed = 3;
  auto log = BuildLogEnsemble(f.sequences, f.vocab, f.table, o);
  ASSERT_TRUE(log.ok()) << log.status();
  ASSERT_EQ(log->sketches().size(), 5u);
  for (const auto& s : log->sketches()) EXPECT_EQ(s.epsilon(), Eps(1));
  EXPECT_EQ(log->total_epsilon(), Eps(5));

  auto lin = BuildLinearEnsemble(f.sequences, f.vocab, f.table, o);
  ASSERT_TRUE(lin.ok());
  ASSERT_EQ(lin->sketches().size(), 10u);
  for (const auto& s : lin->sketches()) EXPECT_EQ(s.epsilon(), Eps(0.5));
  EXPECT_EQ(lin->total_epsilon(), Eps(5));

  o.epsilon = Eps(1);
  o.max_length = 3;
  auto odd = BuildLinearEnsemble(f.sequences, f.vocab, f.table, o);
  ASSERT_TRUE(odd.ok());
  EXPECT_EQ(odd->total_epsilon(), Eps(1));
}

TEST(KdeEnsembleTest, Routing) {
  Fixture f = MakeFixture(4, 10, 2, 4);
  EnsembleOptions o;
  o.max_length = 10;
  o.epsilon = Eps(1);
  o.num_features = 8;
  auto log = *BuildLogEnsemble(f.sequences, f.vocab, f.table, o);
  const int expected[] = {0, 1, 2, 2, 3, 3, 3, 3, 4, 4};
  for (int l = 1; l <= 10; ++l) EXPECT_EQ(*log.Route(l), expected[l - 1]);
  EXPECT_EQ(log.Route(11).status().code(), absl::StatusCode::kOutOfRange);
  EXPECT_EQ(log.Route(0).status().code(), absl::StatusCode::kOutOfRange);

  auto lin = *BuildLinearEnsemble(f.sequences, f.vocab, f.table, o);
  for (int l = 1; l <= 10; ++l) EXPECT_EQ(*lin.Route(l), l - 1);

  auto ind = *BuildEnsemble(EnsembleKind::kIndependent, f.sequences, f.vocab,
                            f.table, o);
  EXPECT_EQ(*ind.Route(1), 0);
  EXPECT_FALSE(ind.Route(2).ok());
}

TEST(KdeEnsembleTest, NoiselessQueriesMatchExactPrefixKde) {
  Fixture f = MakeFixture(6, 60, 4, 5);
  EnsembleOptions o;
  o.max_length = 5;
  o.epsilon = Eps(1);
  o.num_features = 40000;
  o.seed = 6;
  o.noise = testing_hooks::DisableNoiseForTesting();
  const double alpha = 3 / std::sqrt(40000.0);
  for (EnsembleKind kind : {EnsembleKind::kLinear, EnsembleKind::kLogarithmic}) {
    auto e = BuildEnsemble(kind, f.sequences, f.vocab, f.table, o);
    ASSERT_TRUE(e.ok()) << e.status();
    Rng rng(7);
    for (int l = 1; l <= 5; ++l) {
      std::vector<std::string> prefix;
      for (int i = 0; i < l; ++i) {
        prefix.push_back("t" + std::to_string(rng.UniformIndex(6)));
      }
      const double u = kind == EnsembleKind::kLinear ? oracle::LinearU(l)
                                                     : oracle::LogU(l);
      const double exact = oracle::PrefixKde(f.docs, prefix, f.table, u);
      auto q = EnsembleQuery(*e, prefix, f.table);
      ASSERT_TRUE(q.ok()) << q.status();
      EXPECT_EQ(q->prefix_len, l);
      EXPECT_NEAR(q->value, exact, alpha * q->blowup)
          << EnsembleKindName(kind) << " l=" << l;
    }
  }
}

TEST(KdeEnsembleTest, FromSketchesChecksShape) {
  Fixture f = MakeFixture(4, 10, 2, 8);
  EnsembleOptions o;
  o.max_length = 4;
  o.epsilon = Eps(1);
  o.num_features = 8;
  auto log = *BuildLogEnsemble(f.sequences, f.vocab, f.table, o);
  std::vector<DpKdeSketch> sketches = log.sketches();
  EXPECT_TRUE(KdeEnsemble::FromSketches(EnsembleKind::kLogarithmic, 4,
                                        sketches).ok());
  EXPECT_FALSE(
      KdeEnsemble::FromSketches(EnsembleKind::kLinear, 4, sketches).ok());
  std::swap(sketches[0], sketches[1]);
  EXPECT_FALSE(KdeEnsemble::FromSketches(EnsembleKind::kLogarithmic, 4,
                                         sketches).ok());
}

TEST(KdeEnsembleTest, RejectsBadOptions) {
  Fixture f = MakeFixture(4, 10, 2, 9);
  EnsembleOptions o;
  o.num_features = 8;
  EXPECT_FALSE(BuildLogEnsemble(f.sequences, f.vocab, f.table, o).ok());
  o.epsilon = Eps(1);
  o.max_length = 0;
  EXPECT_FALSE(BuildLogEnsemble(f.sequences, f.vocab, f.table, o).ok());
  o.max_length = 3;
  const std::vector<ExtractedSequence> none = {{"d", {}, "x"}};
  EXPECT_EQ(BuildLogEnsemble(none, f.vocab, f.table, o).status().code(),
            absl::StatusCode::kFailedPrecondition);
}

}  // namespace
}  // namespace dpkps
