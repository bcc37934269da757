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

#include "dpkps/pipeline.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "absl/container/flat_hash_set.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "dpkps/random.h"
#include "dpkps/status_macros.h"
#include "glog/logging.h"
#include "json.hpp"

namespace dpkps {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kManifestFormat[] = "dpkps.run.v1";
constexpr char kVocabManifestFormat[] = "dpkps.vocab.v1";

absl::StatusOr<std::string> ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

absl::Status WriteFile(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    return absl::PermissionDeniedError(
        absl::StrCat("cannot write ", path.string()));
  }
  out << contents;
  out.close();
  if (!out) {
    return absl::DataLossError(absl::StrCat("write failed: ", path.string()));
  }
  return absl::OkStatus();
}

absl::StatusOr<json> ParseJsonFile(const fs::path& path) {
  DPKPS_ASSIGN_OR_RETURN(std::string text, ReadFile(path));
  json obj = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded() || !obj.is_object()) {
    return absl::DataLossError(
        absl::StrCat(path.string(), " is not a JSON object"));
  }
  return obj;
}

std::vector<std::string> ReadLines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string JoinLines(const std::vector<std::string>& lines) {
  std::string out;
  for (const std::string& line : lines) absl::StrAppend(&out, line, "\n");
  return out;
}

std::vector<std::string> ClassLabels(const ReleasedModel& model) {
  std::vector<std::string> labels;
  for (const ClassModel& c : model.classes) labels.push_back(c.label);
  return labels;
}

}  // namespace

std::string_view SamplingModeName(SamplingMode mode) {
  switch (mode) {
    case SamplingMode::kIndependent:
      return "independent";
    case SamplingMode::kIterative:
      return "iterative";
  }
  return "unknown";
}

absl::StatusOr<SamplingMode> ParseSamplingMode(std::string_view name) {
  if (name == "independent") return SamplingMode::kIndependent;
  if (name == "iterative") return SamplingMode::kIterative;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown sampling mode \"", std::string(name), "\""));
}

std::string SketchMechanismName(const BlockGeometry& geometry) {
  return absl::StrCat("kde/k=", geometry.num_blocks);
}

absl::StatusOr<PrivatizedVocabulary> PrivatizeCorpusVocabulary(
    std::span<const ExtractedSequence> extracted, const PublicVocabulary& vocab,
    const BuildConfig& config, BudgetLedger& ledger) {
  DPKPS_RETURN_IF_ERROR(ledger.Charge(kVocabularyMechanism, config.eps_voc));
  Rng rng(DeriveSeed(config.seed, 0));
  return PrivatizeVocabulary(extracted, vocab,
                             VocabPrivatizerOptions{.s_per_doc = config.s_per_doc,
                                                    .size = config.vocab_size,
                                                    .epsilon = config.eps_voc},
                             rng);
}

absl::StatusOr<EmbeddingTable> RestrictToReleased(
    const PrivatizedVocabulary& released, const EmbeddingTable& table) {
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (const std::string& term : released.terms) {
    auto row = table.Find(term);
    if (!row.has_value()) continue;
    auto v = table.Row(*row);
    rows.emplace_back(term, std::vector<double>(v.begin(), v.end()));
  }
  return EmbeddingTable::Create(table.dim(), std::move(rows));
}

std::vector<ExtractedSequence> FilterToReleased(
    std::span<const ExtractedSequence> extracted,
    const PrivatizedVocabulary& released, const EmbeddingTable& table) {
  absl::flat_hash_set<TermId> keep;
  for (int i = 0; i < released.size(); ++i) {
    if (table.Contains(released.terms[i])) keep.insert(released.term_ids[i]);
  }
  std::vector<ExtractedSequence> out;
  out.reserve(extracted.size());
  for (const ExtractedSequence& seq : extracted) {
    ExtractedSequence filtered;
    filtered.doc_id = seq.doc_id;
    filtered.label = seq.label;
    for (TermId id : seq.term_ids) {
      if (keep.contains(id)) filtered.term_ids.push_back(id);
    }
    out.push_back(std::move(filtered));
  }
  return out;
}

absl::StatusOr<std::vector<ClassModel>> BuildClassEnsembles(
    std::span<const ExtractedSequence> extracted, const PublicVocabulary& vocab,
    const PrivatizedVocabulary& released, const EmbeddingTable& table,
    const BuildConfig& config, BudgetLedger& ledger) {
  std::map<std::string, std::vector<ExtractedSequence>> by_label;
  for (ExtractedSequence& seq : FilterToReleased(extracted, released, table)) {
    by_label[seq.label].push_back(std::move(seq));
  }
  if (by_label.empty()) return absl::InvalidArgumentError("empty corpus");
  std::vector<std::string> labels;
  for (const auto& [label, seqs] : by_label) labels.push_back(label);

  const std::vector<BlockGeometry> geometries =
      EnsembleGeometries(config.ensemble, config.max_length, table.dim());
  const std::vector<Epsilon> shares =
      config.eps_kde.Split(static_cast<int>(geometries.size()));
  for (size_t j = 0; j < geometries.size(); ++j) {
    DPKPS_RETURN_IF_ERROR(
        ledger.Charge(SketchMechanismName(geometries[j]), shares[j], labels));
  }

  const uint64_t ensemble_root = DeriveSeed(config.seed, 1);
  std::vector<ClassModel> out;
  int index = 0;
  for (const auto& [label, seqs] : by_label) {
    EnsembleOptions options{.max_length = config.max_length,
                            .epsilon = config.eps_kde,
                            .num_features = config.num_features,
                            .seed = DeriveSeed(ensemble_root, index++),
                            .noise = config.noise};
    auto ensemble = BuildEnsemble(config.ensemble, seqs, vocab, table, options);
    if (!ensemble.ok()) {
      return absl::Status(ensemble.status().code(),
                          absl::StrCat("class \"", label, "\": ",
                                       ensemble.status().message()));
    }
    out.push_back(ClassModel{.label = label,
                             .documents = static_cast<int>(seqs.size()),
                             .ensemble = *std::move(ensemble)});
    LOG(INFO) << "class \"" << label << "\": " << seqs.size()
              << " documents, " << geometries.size() << " sketches";
  }
  return out;
}

absl::StatusOr<ReleasedModel> BuildModel(std::span<const Document> docs,
                                         const PublicVocabulary& vocab,
                                         const EmbeddingTable& table,
                                         const BuildConfig& config) {
  if (table.size() == 0) return absl::InvalidArgumentError("empty embeddings");
  std::vector<ExtractedSequence> extracted;
  extracted.reserve(docs.size());
  for (const Document& doc : docs) {
    extracted.push_back(ExtractTerms(doc, vocab, config.s_per_doc));
  }
  ReleasedModel model;
  model.ledger = BudgetLedger(config.cap);
  model.s_per_doc = config.s_per_doc;
  DPKPS_ASSIGN_OR_RETURN(
      model.vocab,
      PrivatizeCorpusVocabulary(extracted, vocab, config, model.ledger));
  DPKPS_ASSIGN_OR_RETURN(model.table, RestrictToReleased(model.vocab, table));
  DPKPS_ASSIGN_OR_RETURN(
      model.classes, BuildClassEnsembles(extracted, vocab, model.vocab,
                                         model.table, config, model.ledger));
  return model;
}

absl::Status CheckLedgerConsistency(const ReleasedModel& model) {
  if (model.classes.empty()) {
    return absl::FailedPreconditionError("model has no class ensembles");
  }
  const std::vector<LedgerEntry>& entries = model.ledger.entries();
  auto find = [&](const std::string& name) -> const LedgerEntry* {
    const LedgerEntry* found = nullptr;
    for (const LedgerEntry& e : entries) {
      if (e.mechanism != name) continue;
      if (found != nullptr) return nullptr;
      found = &e;
    }
    return found;
  };

  const LedgerEntry* voc = find(kVocabularyMechanism);
  if (voc == nullptr || voc->epsilon != model.vocab.epsilon) {
    return absl::FailedPreconditionError(absl::StrCat(
        "ledger does not record the vocabulary release at epsilon ",
        model.vocab.epsilon.ToString()));
  }
  const std::vector<std::string> labels = ClassLabels(model);
  const std::vector<DpKdeSketch>& first = model.classes[0].ensemble.sketches();
  for (const ClassModel& c : model.classes) {
    const std::vector<DpKdeSketch>& sketches = c.ensemble.sketches();
    if (sketches.size() != first.size()) {
      return absl::FailedPreconditionError("class ensembles differ in shape");
    }
    for (size_t j = 0; j < sketches.size(); ++j) {
      const std::string name = SketchMechanismName(sketches[j].geometry());
      const LedgerEntry* e = find(name);
      if (e == nullptr || e->epsilon != sketches[j].epsilon()) {
        return absl::FailedPreconditionError(absl::StrCat(
            "ledger has no single charge for ", name, " of class \"", c.label,
            "\" at epsilon ", sketches[j].epsilon().ToString()));
      }
      if (e->parallel_partitions != labels) {
        return absl::FailedPreconditionError(absl::StrCat(
            "ledger charge for ", name, " covers classes [",
            absl::StrJoin(e->parallel_partitions, ", "), "], expected [",
            absl::StrJoin(labels, ", "), "]"));
      }
    }
  }
  if (entries.size() != first.size() + 1) {
    return absl::FailedPreconditionError(absl::StrCat(
        "ledger has ", entries.size(), " entries, expected ",
        first.size() + 1));
  }
  return absl::OkStatus();
}

absl::StatusOr<SampleResult> SampleSequences(const ReleasedModel& model,
                                             const SampleConfig& config) {
  DPKPS_RETURN_IF_ERROR(CheckLedgerConsistency(model));
  DPKPS_ASSIGN_OR_RETURN(CandidateSet candidates,
                         CandidateSet::Create(model.vocab, model.table));
  SampleResult out;
  for (size_t j = 0; j < model.classes.size(); ++j) {
    const ClassModel& c = model.classes[j];
    SamplerOptions options{.length = config.length,
                           .count = config.count_per_class,
                           .seed = DeriveSeed(config.seed, j),
                           .strategy = config.strategy,
                           .label = c.label,
                           .num_threads = config.num_threads};
    absl::StatusOr<SampleResult> part;
    if (config.mode == SamplingMode::kIndependent) {
      part = SampleIndependent(c.ensemble.sketches().front(), candidates,
                               options);
    } else {
      part = SampleIterative(c.ensemble, candidates, options);
    }
    if (!part.ok()) {
      return absl::Status(part.status().code(),
                          absl::StrCat("class \"", c.label, "\": ",
                                       part.status().message()));
    }
    out.kde_queries += part->kde_queries;
    for (KeyphraseSequence& seq : part->sequences) {
      out.sequences.push_back(std::move(seq));
    }
  }
  return out;
}

absl::StatusOr<PipelineRun> RunPipeline(std::span<const Document> docs,
                                        const PublicVocabulary& vocab,
                                        const EmbeddingTable& table,
                                        const PipelineConfig& config) {
  BuildConfig build = config.build;
  if (config.sample.mode == SamplingMode::kIndependent) {
    build.ensemble = EnsembleKind::kIndependent;
  }
  PipelineRun run;
  DPKPS_ASSIGN_OR_RETURN(run.model, BuildModel(docs, vocab, table, build));
  DPKPS_ASSIGN_OR_RETURN(SampleResult sampled,
                         SampleSequences(run.model, config.sample));
  run.sequences = std::move(sampled.sequences);
  run.kde_queries = sampled.kde_queries;
  return run;
}

absl::Status SaveModel(const ReleasedModel& model, const std::string& dir) {
  if (model.classes.empty()) {
    return absl::InvalidArgumentError("model has no class ensembles");
  }
  std::error_code ec;
  const fs::path root(dir);
  fs::create_directories(root / "sketches", ec);
  if (ec) {
    return absl::PermissionDeniedError(
        absl::StrCat("cannot create ", dir, ": ", ec.message()));
  }

  const KdeEnsemble& first = model.classes[0].ensemble;
  json classes = json::array();
  for (size_t c = 0; c < model.classes.size(); ++c) {
    const ClassModel& cm = model.classes[c];
    json sketches = json::array();
    for (const DpKdeSketch& sketch : cm.ensemble.sketches()) {
      const BlockGeometry& g = sketch.geometry();
      const std::string rel =
          absl::StrCat("sketches/c", c, "_k", g.num_blocks, ".json");
      DPKPS_ASSIGN_OR_RETURN(std::string text, SerializeSketch(sketch));
      DPKPS_RETURN_IF_ERROR(WriteFile(root / rel, text));
      sketches.push_back({{"k", g.num_blocks},
                          {"u", g.block_sq_norm},
                          {"epsilon", sketch.epsilon().ToString()},
                          {"epsilon_micros", sketch.epsilon().micros()},
                          {"features", sketch.num_features()},
                          {"feature_seed", sketch.features().seed()},
                          {"path", rel}});
    }
    classes.push_back({{"label", cm.label},
                       {"documents", cm.documents},
                       {"sketches", std::move(sketches)}});
  }

  json manifest = {
      {"format", kManifestFormat},
      {"ensemble", std::string(EnsembleKindName(first.kind()))},
      {"max_length", first.max_length()},
      {"block_dim", model.table.dim()},
      {"s_per_doc", model.s_per_doc},
      {"vocabulary",
       {{"path", "vocab.txt"},
        {"epsilon", model.vocab.epsilon.ToString()},
        {"epsilon_micros", model.vocab.epsilon.micros()},
        {"requested_size", model.vocab.requested_size},
        {"term_ids", model.vocab.term_ids}}},
      {"embeddings", "embeddings.txt"},
      {"classes", std::move(classes)}};
  DPKPS_RETURN_IF_ERROR(
      WriteFile(root / "manifest.json", manifest.dump(2) + "\n"));
  DPKPS_RETURN_IF_ERROR(
      WriteFile(root / "vocab.txt", JoinLines(model.vocab.terms)));
  std::ostringstream emb;
  std::vector<std::string> table_terms;
  for (int r = 0; r < model.table.size(); ++r) {
    table_terms.push_back(model.table.term(r));
  }
  DPKPS_RETURN_IF_ERROR(WriteEmbeddings(model.table, table_terms, emb));
  DPKPS_RETURN_IF_ERROR(WriteFile(root / "embeddings.txt", emb.str()));
  return WriteFile(root / "budget.json", model.ledger.ToJson());
}

absl::StatusOr<ReleasedModel> LoadModel(const std::string& dir) {
  const fs::path root(dir);
  DPKPS_ASSIGN_OR_RETURN(json manifest, ParseJsonFile(root / "manifest.json"));
  ReleasedModel model;
  try {
    if (manifest.at("format").get<std::string>() != kManifestFormat) {
      return absl::InvalidArgumentError("unsupported manifest format");
    }
    DPKPS_ASSIGN_OR_RETURN(
        EnsembleKind kind,
        ParseEnsembleKind(manifest.at("ensemble").get<std::string>()));
    const int max_length = manifest.at("max_length").get<int>();
    const int block_dim = manifest.at("block_dim").get<int>();
    model.s_per_doc = manifest.at("s_per_doc").get<int>();

    const json& voc = manifest.at("vocabulary");
    DPKPS_ASSIGN_OR_RETURN(
        std::string vocab_text,
        ReadFile(root / voc.at("path").get<std::string>()));
    model.vocab.terms = ReadLines(vocab_text);
    model.vocab.term_ids = voc.at("term_ids").get<std::vector<TermId>>();
    model.vocab.epsilon =
        Epsilon::FromMicros(voc.at("epsilon_micros").get<int64_t>());
    model.vocab.requested_size = voc.at("requested_size").get<int>();
    if (model.vocab.terms.size() != model.vocab.term_ids.size()) {
      return absl::DataLossError(
          "vocab.txt and the manifest disagree on the vocabulary size");
    }
    DPKPS_ASSIGN_OR_RETURN(
        model.table,
        LoadEmbeddings((root / manifest.at("embeddings").get<std::string>())
                           .string(),
                       block_dim));

    for (const json& c : manifest.at("classes")) {
      std::vector<DpKdeSketch> sketches;
      for (const json& s : c.at("sketches")) {
        DPKPS_ASSIGN_OR_RETURN(std::string text,
                               ReadFile(root / s.at("path").get<std::string>()));
        DPKPS_ASSIGN_OR_RETURN(DpKdeSketch sketch, ParseSketch(text));
        if (sketch.epsilon().micros() != s.at("epsilon_micros").get<int64_t>() ||
            sketch.geometry().num_blocks != s.at("k").get<int>()) {
          return absl::DataLossError(absl::StrCat(
              "sketch ", s.at("path").get<std::string>(),
              " does not match its manifest record"));
        }
        sketches.push_back(std::move(sketch));
      }
      DPKPS_ASSIGN_OR_RETURN(
          KdeEnsemble ensemble,
          KdeEnsemble::FromSketches(kind, max_length, std::move(sketches)));
      model.classes.push_back(
          ClassModel{.label = c.at("label").get<std::string>(),
                     .documents = c.at("documents").get<int>(),
                     .ensemble = std::move(ensemble)});
    }
  } catch (const json::exception& e) {
    return absl::DataLossError(absl::StrCat("manifest.json: ", e.what()));
  }

  DPKPS_ASSIGN_OR_RETURN(std::string budget, ReadFile(root / "budget.json"));
  DPKPS_ASSIGN_OR_RETURN(model.ledger, BudgetLedger::FromJson(budget));
  DPKPS_RETURN_IF_ERROR(CheckLedgerConsistency(model));
  return model;
}

absl::Status SavePrivatizedVocabulary(const PrivatizedVocabulary& released,
                                      int s_per_doc, uint64_t seed,
                                      const std::string& path) {
  DPKPS_RETURN_IF_ERROR(WriteFile(path, JoinLines(released.terms)));
  json manifest = {{"format", kVocabManifestFormat},
                   {"epsilon", released.epsilon.ToString()},
                   {"epsilon_micros", released.epsilon.micros()},
                   {"s_per_doc", s_per_doc},
                   {"requested_size", released.requested_size},
                   {"size", released.size()},
                   {"seed", seed},
                   {"term_ids", released.term_ids}};
  return WriteFile(path + ".manifest.json", manifest.dump(2) + "\n");
}

absl::StatusOr<LoadedVocabulary> LoadPrivatizedVocabulary(
    const std::string& path, const PublicVocabulary& vocab) {
  DPKPS_ASSIGN_OR_RETURN(std::string text, ReadFile(path));
  DPKPS_ASSIGN_OR_RETURN(json manifest,
                         ParseJsonFile(path + ".manifest.json"));
  LoadedVocabulary out;
  out.released.terms = ReadLines(text);
  try {
    if (manifest.at("format").get<std::string>() != kVocabManifestFormat) {
      return absl::InvalidArgumentError("unsupported vocabulary manifest");
    }
    out.released.term_ids = manifest.at("term_ids").get<std::vector<TermId>>();
    out.released.epsilon =
        Epsilon::FromMicros(manifest.at("epsilon_micros").get<int64_t>());
    out.released.requested_size = manifest.at("requested_size").get<int>();
    out.s_per_doc = manifest.at("s_per_doc").get<int>();
  } catch (const json::exception& e) {
    return absl::DataLossError(absl::StrCat(path, ".manifest.json: ", e.what()));
  }
  if (out.released.term_ids.size() != out.released.terms.size()) {
    return absl::DataLossError(absl::StrCat(
        path, " and its manifest disagree on the vocabulary size"));
  }
  for (int i = 0; i < out.released.size(); ++i) {
    const TermId id = out.released.term_ids[i];
    if (id < 0 || id >= vocab.size() ||
        vocab.term(id) != out.released.terms[i]) {
      return absl::FailedPreconditionError(absl::StrCat(
          "released term \"", out.released.terms[i],
          "\" does not match the public vocabulary"));
    }
  }
  return out;
}

}  // namespace dpkps
