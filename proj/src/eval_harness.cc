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

#include "dpkps/eval_harness.h"

#include <algorithm>
#include <atomic>
#include <map>
#include <optional>
#include <thread>

#include "absl/container/flat_hash_map.h"
#include "absl/container/flat_hash_set.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "dpkps/random.h"
#include "dpkps/status_macros.h"
#include "glog/logging.h"
#include "json.hpp"

namespace dpkps {
namespace {

using nlohmann::json;

absl::StatusOr<json> ParseObject(const std::string& text,
                                 std::string_view what) {
  json obj = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded() || !obj.is_object()) {
    return absl::InvalidArgumentError(
        absl::StrCat(std::string(what), " is not a JSON object"));
  }
  return obj;
}

absl::StatusOr<Epsilon> EpsilonFromJson(const json& v) {
  if (!v.is_number()) return absl::InvalidArgumentError("epsilon not a number");
  return Epsilon::FromDouble(v.get<double>());
}

std::vector<std::vector<std::string>> ResolvePools(const ToyCorpusSpec& spec) {
  if (!spec.class_term_pools.empty()) return spec.class_term_pools;
  std::vector<std::vector<std::string>> pools(spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int i = 0; i < spec.shared_terms; ++i) {
      pools[c].push_back(absl::StrCat("shared", i));
    }
    for (int i = spec.shared_terms; i < spec.pool_size; ++i) {
      pools[c].push_back(absl::StrCat("c", c, "t", i));
    }
  }
  return pools;
}

// Term followed by its forced successors.
std::vector<std::string> Chain(
    const std::string& term,
    const absl::flat_hash_map<std::string, std::string>& successor) {
  std::vector<std::string> chain = {term};
  for (auto it = successor.find(term); it != successor.end();
       it = successor.find(it->second)) {
    chain.push_back(it->second);
  }
  return chain;
}

absl::StatusOr<std::vector<std::string>> DrawDocument(
    const std::vector<std::vector<std::string>>& chains, int length,
    bool with_replacement, Rng& rng) {
  std::vector<std::string> doc;
  absl::flat_hash_set<std::string> used;
  std::vector<int> eligible;
  while (static_cast<int>(doc.size()) < length) {
    const size_t remaining = length - doc.size();
    eligible.clear();
    for (size_t i = 0; i < chains.size(); ++i) {
      if (chains[i].size() > remaining) continue;
      if (!with_replacement &&
          std::any_of(chains[i].begin(), chains[i].end(),
                      [&](const std::string& t) { return used.contains(t); })) {
        continue;
      }
      eligible.push_back(static_cast<int>(i));
    }
    if (eligible.empty()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "cannot fill a document of ", length,
          " terms from the pool under the co-occurrence constraints"));
    }
    const auto& chain = chains[eligible[rng.UniformIndex(eligible.size())]];
    for (const std::string& t : chain) {
      doc.push_back(t);
      used.insert(t);
    }
  }
  return doc;
}

std::string ConfigValue(const std::vector<std::pair<std::string, std::string>>&
                            config,
                        std::string_view key) {
  for (const auto& [k, v] : config) {
    if (k == key) return v;
  }
  return "";
}

}  // namespace

absl::StatusOr<ToyCorpusSpec> ToyCorpusSpec::FromJson(const std::string& text) {
  DPKPS_ASSIGN_OR_RETURN(json obj, ParseObject(text, "corpus spec"));
  ToyCorpusSpec spec;
  try {
    spec.num_classes = obj.value("num_classes", spec.num_classes);
    spec.docs_per_class = obj.value("docs_per_class", spec.docs_per_class);
    spec.held_out_per_class =
        obj.value("held_out_per_class", spec.held_out_per_class);
    if (obj.contains("class_term_pools")) {
      spec.class_term_pools =
          obj.at("class_term_pools")
              .get<std::vector<std::vector<std::string>>>();
    }
    spec.pool_size = obj.value("pool_size", spec.pool_size);
    spec.shared_terms = obj.value("shared_terms", spec.shared_terms);
    spec.terms_per_doc = obj.value("terms_per_doc", spec.terms_per_doc);
    if (obj.contains("co_occurrence_pairs")) {
      for (const json& pair : obj.at("co_occurrence_pairs")) {
        auto v = pair.get<std::vector<std::string>>();
        if (v.size() != 2) {
          return absl::InvalidArgumentError(
              "co_occurrence_pairs entries must be [a, b]");
        }
        spec.co_occurrence_pairs.emplace_back(v[0], v[1]);
      }
    }
    spec.with_replacement = obj.value("with_replacement", spec.with_replacement);
    spec.embedding_dim = obj.value("embedding_dim", spec.embedding_dim);
    spec.seed = obj.value("seed", spec.seed);
    if (obj.contains("labels")) {
      spec.labels = obj.at("labels").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("corpus spec: ", e.what()));
  }
  return spec;
}

absl::StatusOr<ToyCorpus> SynthCorpus(const ToyCorpusSpec& spec) {
  if (spec.num_classes < 1) {
    return absl::InvalidArgumentError("num_classes must be >= 1");
  }
  if (spec.terms_per_doc < 1) {
    return absl::InvalidArgumentError("terms_per_doc must be >= 1");
  }
  if (spec.docs_per_class < 0 || spec.held_out_per_class < 0) {
    return absl::InvalidArgumentError("document counts must be >= 0");
  }
  if (spec.embedding_dim < 1) {
    return absl::InvalidArgumentError("embedding_dim must be >= 1");
  }
  if (spec.class_term_pools.empty() &&
      (spec.shared_terms < 0 || spec.shared_terms > spec.pool_size)) {
    return absl::InvalidArgumentError("shared_terms must lie in [0, pool_size]");
  }
  if (!spec.class_term_pools.empty() &&
      static_cast<int>(spec.class_term_pools.size()) != spec.num_classes) {
    return absl::InvalidArgumentError("need one term pool per class");
  }
  if (!spec.labels.empty() &&
      static_cast<int>(spec.labels.size()) != spec.num_classes) {
    return absl::InvalidArgumentError("need one label per class");
  }
  const std::vector<std::vector<std::string>> pools = ResolvePools(spec);

  std::vector<std::string> all_terms;
  absl::flat_hash_set<std::string> seen;
  for (size_t c = 0; c < pools.size(); ++c) {
    if (!spec.with_replacement &&
        static_cast<int>(pools[c].size()) < spec.terms_per_doc) {
      return absl::InvalidArgumentError(absl::StrCat(
          "pool of class ", c, " has ", pools[c].size(),
          " terms, fewer than terms_per_doc = ", spec.terms_per_doc,
          " without replacement"));
    }
    for (const std::string& term : pools[c]) {
      if (Tokenize(term) != std::vector<std::string>{term}) {
        return absl::InvalidArgumentError(absl::StrCat(
            "pool term \"", term, "\" is not a single normalized word"));
      }
      if (seen.insert(term).second) all_terms.push_back(term);
    }
  }

  absl::flat_hash_map<std::string, std::string> successor;
  absl::flat_hash_set<std::string> forced;
  for (const auto& [a, b] : spec.co_occurrence_pairs) {
    if (!seen.contains(a) || !seen.contains(b)) {
      return absl::InvalidArgumentError(absl::StrCat(
          "co-occurrence pair (", a, ", ", b, ") uses a term outside the pools"));
    }
    auto [it, inserted] = successor.emplace(a, b);
    if (!inserted && it->second != b) {
      return absl::InvalidArgumentError(
          absl::StrCat("term \"", a, "\" has two forced successors"));
    }
    forced.insert(b);
  }
  for (const auto& [a, b] : successor) {
    std::string t = b;
    for (size_t steps = 0; steps <= successor.size(); ++steps) {
      if (t == a) {
        return absl::InvalidArgumentError(
            absl::StrCat("co-occurrence pairs form a cycle through \"", a,
                         "\""));
      }
      auto next = successor.find(t);
      if (next == successor.end()) break;
      t = next->second;
    }
  }

  ToyCorpus corpus;
  DPKPS_ASSIGN_OR_RETURN(corpus.vocab,
                         PublicVocabulary::FromTerms(all_terms, 1));
  Rng embed_rng(DeriveSeed(spec.seed, 1));
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (const std::string& term : all_terms) {
    std::vector<double> v(spec.embedding_dim);
    for (double& x : v) x = embed_rng.Normal();
    rows.emplace_back(term, std::move(v));
  }
  DPKPS_ASSIGN_OR_RETURN(corpus.table,
                         EmbeddingTable::Create(spec.embedding_dim,
                                                std::move(rows)));

  for (int c = 0; c < spec.num_classes; ++c) {
    const std::string label =
        spec.labels.empty() ? absl::StrCat("class", c) : spec.labels[c];
    std::vector<std::vector<std::string>> chains;
    for (const std::string& term : pools[c]) {
      if (!forced.contains(term)) chains.push_back(Chain(term, successor));
    }
    const uint64_t class_root = DeriveSeed(spec.seed, 2 + c);
    const int total = spec.docs_per_class + spec.held_out_per_class;
    for (int i = 0; i < total; ++i) {
      Rng rng(DeriveSeed(class_root, i));
      DPKPS_ASSIGN_OR_RETURN(
          std::vector<std::string> terms,
          DrawDocument(chains, spec.terms_per_doc, spec.with_replacement, rng));
      Document doc{.id = absl::StrCat(label, "-", i),
                   .text = absl::StrJoin(terms, " "),
                   .label = label};
      (i < spec.docs_per_class ? corpus.documents : corpus.held_out)
          .push_back(std::move(doc));
    }
  }
  return corpus;
}

std::vector<KeyphraseSequence> SequencesFromDocuments(
    std::span<const Document> docs, const PublicVocabulary& vocab, int limit) {
  std::vector<KeyphraseSequence> out;
  out.reserve(docs.size());
  for (const Document& doc : docs) {
    ExtractedSequence extracted = ExtractTerms(doc, vocab, limit);
    KeyphraseSequence seq;
    seq.label = doc.label;
    seq.sampler = "document";
    for (TermId id : extracted.term_ids) seq.terms.push_back(vocab.term(id));
    out.push_back(std::move(seq));
  }
  return out;
}

absl::StatusOr<EvalReport> CentroidClassify(
    std::span<const KeyphraseSequence> train,
    std::span<const KeyphraseSequence> test, const EmbeddingTable& table) {
  if (train.empty()) return absl::InvalidArgumentError("no train sequences");
  if (test.empty()) return absl::InvalidArgumentError("no test sequences");
  const int d = table.dim();
  auto embed = [&](const KeyphraseSequence& seq)
      -> absl::StatusOr<Eigen::VectorXd> {
    if (seq.terms.empty()) {
      return absl::InvalidArgumentError("empty sequence");
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const std::string& term : seq.terms) {
      DPKPS_ASSIGN_OR_RETURN(std::span<const double> v, table.Vector(term));
      mean += Eigen::Map<const Eigen::VectorXd>(v.data(), d);
    }
    return mean / static_cast<double>(seq.terms.size());
  };

  EvalReport report;
  std::map<std::string, int> class_of;
  for (const KeyphraseSequence& seq : train) class_of.emplace(seq.label, 0);
  for (auto& [label, id] : class_of) {
    id = static_cast<int>(report.labels.size());
    report.labels.push_back(label);
  }
  const int k = static_cast<int>(report.labels.size());

  std::vector<Eigen::VectorXd> centroids(k, Eigen::VectorXd::Zero(d));
  std::vector<int64_t> train_counts(k, 0);
  for (const KeyphraseSequence& seq : train) {
    DPKPS_ASSIGN_OR_RETURN(Eigen::VectorXd e, embed(seq));
    const int c = class_of.at(seq.label);
    centroids[c] += e;
    ++train_counts[c];
  }
  for (int c = 0; c < k; ++c) centroids[c] /= static_cast<double>(train_counts[c]);

  report.confusion.assign(k, std::vector<int64_t>(k, 0));
  int64_t correct = 0;
  for (const KeyphraseSequence& seq : test) {
    auto truth = class_of.find(seq.label);
    if (truth == class_of.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "test label \"", seq.label, "\" has no train sequences"));
    }
    DPKPS_ASSIGN_OR_RETURN(Eigen::VectorXd e, embed(seq));
    int best = 0;
    double best_dist = (e - centroids[0]).squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double dist = (e - centroids[c]).squaredNorm();
      if (dist < best_dist) {
        best = c;
        best_dist = dist;
      }
    }
    ++report.confusion[truth->second][best];
    if (best == truth->second) ++correct;
    ++report.test_count;
  }
  report.accuracy = report.test_count == 0
                        ? 0
                        : static_cast<double>(correct) / report.test_count;
  for (int c = 0; c < k; ++c) {
    int64_t row = 0;
    for (int64_t n : report.confusion[c]) row += n;
    report.per_class_accuracy.push_back(
        row == 0 ? 0 : static_cast<double>(report.confusion[c][c]) / row);
  }
  return report;
}

std::string EvalReport::ToJson() const {
  json cfg = json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  json per_class = json::object();
  for (size_t c = 0; c < labels.size(); ++c) {
    per_class[labels[c]] = per_class_accuracy[c];
  }
  return json{{"accuracy", accuracy},
              {"labels", labels},
              {"per_class_accuracy", per_class},
              {"confusion", confusion},
              {"test_count", test_count},
              {"config", cfg}}
      .dump();
}

absl::StatusOr<EvalGrid> EvalGrid::FromJson(const std::string& text) {
  DPKPS_ASSIGN_OR_RETURN(json obj, ParseObject(text, "grid"));
  EvalGrid grid;
  try {
    for (const json& m : obj.at("modes")) {
      DPKPS_ASSIGN_OR_RETURN(SamplingMode mode,
                             ParseSamplingMode(m.get<std::string>()));
      grid.modes.push_back(mode);
    }
    for (const json& b : obj.at("budgets")) {
      if (!b.is_array() || b.size() != 2) {
        return absl::InvalidArgumentError(
            "budgets entries must be [eps_voc, eps_kde]");
      }
      DPKPS_ASSIGN_OR_RETURN(Epsilon voc, EpsilonFromJson(b[0]));
      DPKPS_ASSIGN_OR_RETURN(Epsilon kde, EpsilonFromJson(b[1]));
      grid.budgets.emplace_back(voc, kde);
    }
    BuildConfig& build = grid.base.build;
    SampleConfig& sample = grid.base.sample;
    if (obj.contains("ensemble")) {
      DPKPS_ASSIGN_OR_RETURN(
          build.ensemble,
          ParseEnsembleKind(obj.at("ensemble").get<std::string>()));
    }
    if (obj.contains("strategy")) {
      DPKPS_ASSIGN_OR_RETURN(
          sample.strategy,
          SelectionStrategy::Parse(obj.at("strategy").get<std::string>()));
    }
    build.max_length = obj.value("L", build.max_length);
    sample.length = build.max_length;
    sample.count_per_class = obj.value("count", sample.count_per_class);
    build.s_per_doc = obj.value("S", build.s_per_doc);
    build.vocab_size = obj.value("N", build.vocab_size);
    build.num_features = obj.value("features", build.num_features);
    build.seed = obj.value("seed", build.seed);
    sample.seed = obj.value("sample_seed", DeriveSeed(build.seed, 99));
    grid.num_threads = obj.value("threads", grid.num_threads);
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(absl::StrCat("grid: ", e.what()));
  }
  if (grid.modes.empty() || grid.budgets.empty()) {
    return absl::InvalidArgumentError("grid needs modes and budgets");
  }
  return grid;
}

absl::StatusOr<ComparisonTable> CompareModes(const ToyCorpus& corpus,
                                             const EvalGrid& grid) {
  if (corpus.held_out.empty()) {
    return absl::InvalidArgumentError("corpus has no held-out documents");
  }
  const std::vector<KeyphraseSequence> test = SequencesFromDocuments(
      corpus.held_out, corpus.vocab, grid.base.build.s_per_doc);

  struct Cell {
    PipelineConfig config;
    std::optional<absl::StatusOr<EvalReport>> result;
  };
  std::vector<Cell> cells;
  for (SamplingMode mode : grid.modes) {
    for (const auto& [voc, kde] : grid.budgets) {
      const uint64_t index = cells.size();
      Cell cell;
      cell.config = grid.base;
      cell.config.build.eps_voc = voc;
      cell.config.build.eps_kde = kde;
      cell.config.build.seed = DeriveSeed(grid.base.build.seed, index);
      cell.config.sample.mode = mode;
      cell.config.sample.seed = DeriveSeed(grid.base.sample.seed, index);
      cells.push_back(std::move(cell));
    }
  }

  auto evaluate = [&](const PipelineConfig& config)
      -> absl::StatusOr<EvalReport> {
    DPKPS_ASSIGN_OR_RETURN(
        PipelineRun run,
        RunPipeline(corpus.documents, corpus.vocab, corpus.table, config));
    DPKPS_ASSIGN_OR_RETURN(EvalReport report,
                           CentroidClassify(run.sequences, test, corpus.table));
    const BuildConfig& b = config.build;
    const bool independent = config.sample.mode == SamplingMode::kIndependent;
    report.config = {
        {"mode", std::string(SamplingModeName(config.sample.mode))},
        {"ensemble", std::string(EnsembleKindName(
                         independent ? EnsembleKind::kIndependent : b.ensemble))},
        {"strategy", independent ? "multinomial"
                                 : config.sample.strategy.ToString()},
        {"eps_voc", b.eps_voc.ToString()},
        {"eps_kde", b.eps_kde.ToString()},
        {"eps_total", run.model.ledger.total().ToString()},
        {"L", absl::StrCat(config.sample.length)},
        {"count_per_class", absl::StrCat(config.sample.count_per_class)},
        {"S", absl::StrCat(b.s_per_doc)},
        {"N", absl::StrCat(b.vocab_size)},
        {"released_terms", absl::StrCat(run.model.vocab.size())},
        {"features", absl::StrCat(b.num_features)},
        {"seed", absl::StrCat(b.seed)}};
    return report;
  };

  std::atomic<size_t> next{0};
  {
    const int threads = std::clamp<int>(grid.num_threads, 1,
                                        static_cast<int>(cells.size()));
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < cells.size();
             i = next.fetch_add(1)) {
          cells[i].result = evaluate(cells[i].config);
        }
      });
    }
  }

  ComparisonTable table;
  for (Cell& cell : cells) {
    DPKPS_RETURN_IF_ERROR(cell.result->status());
    table.reports.push_back(**std::move(cell.result));
  }
  return table;
}

std::string ComparisonTable::ToJson() const {
  json rows = json::array();
  for (const EvalReport& r : reports) rows.push_back(json::parse(r.ToJson()));
  return json{{"reports", rows}}.dump(2) + "\n";
}

std::string ComparisonTable::ToText() const {
  std::string out = absl::StrFormat("%-12s %-12s %-8s %-8s %-8s %-9s %s\n",
                                    "mode", "strategy", "eps_voc", "eps_kde",
                                    "eps", "accuracy", "per-class");
  for (const EvalReport& r : reports) {
    std::string per_class;
    for (size_t c = 0; c < r.labels.size(); ++c) {
      absl::StrAppendFormat(&per_class, "%s%s=%.3f", c == 0 ? "" : " ",
                            r.labels[c], r.per_class_accuracy[c]);
    }
    absl::StrAppendFormat(
        &out, "%-12s %-12s %-8s %-8s %-8s %-9.4f %s\n",
        ConfigValue(r.config, "mode"), ConfigValue(r.config, "strategy"),
        ConfigValue(r.config, "eps_voc"), ConfigValue(r.config, "eps_kde"),
        ConfigValue(r.config, "eps_total"), r.accuracy, per_class);
  }
  return out;
}

}  // namespace dpkps
