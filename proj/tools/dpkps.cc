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

// dpkps: command-line driver for the keyphrase-seeded synthetic text pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "dpkps/corpus_io.h"
#include "dpkps/embedding_store.h"
#include "dpkps/epsilon.h"
#include "dpkps/eval_harness.h"
#include "dpkps/kde_ensemble.h"
#include "dpkps/pipeline.h"
#include "dpkps/privacy_accountant.h"
#include "dpkps/prompt_pipeline.h"
#include "dpkps/sequence_sampler.h"
#include "dpkps/status_macros.h"
#include "dpkps/vocab_privatizer.h"
#include "glog/logging.h"
#include "json.hpp"

namespace dpkps {
namespace {

namespace fs = std::filesystem;

// Runs `write` against `path`, or stdout for "-".
template <typename Fn>
absl::Status WriteOutput(const std::string& path, Fn write) {
  if (path == "-") {
    write(std::cout);
    std::cout.flush();
    return absl::OkStatus();
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::PermissionDeniedError(absl::StrCat("cannot write ", path));
  write(out);
  out.close();
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

absl::StatusOr<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

absl::StatusOr<std::optional<Epsilon>> OptionalCap(double cap) {
  if (cap <= 0) return std::optional<Epsilon>();
  DPKPS_ASSIGN_OR_RETURN(Epsilon e, Epsilon::FromDouble(cap));
  return std::optional<Epsilon>(e);
}

// --- extract -----------------------------------------------------------------

struct ExtractArgs {
  std::string corpus;
  std::string vocab;
  int limit = 10;
  int max_words = 4;
  std::string out = "-";
};

absl::Status RunExtract(const ExtractArgs& a) {
  DPKPS_ASSIGN_OR_RETURN(std::vector<Document> docs, LoadCorpus(a.corpus));
  DPKPS_ASSIGN_OR_RETURN(PublicVocabulary vocab,
                         LoadVocabulary(a.vocab, a.max_words));
  std::vector<ExtractedSequence> extracted;
  extracted.reserve(docs.size());
  for (const Document& doc : docs) {
    extracted.push_back(ExtractTerms(doc, vocab, a.limit));
  }
  return WriteOutput(a.out, [&](std::ostream& out) {
    WriteExtracted(extracted, vocab, out);
  });
}

// --- privatize-vocab ---------------------------------------------------------

struct PrivatizeArgs {
  std::string extracted;
  std::string vocab;
  int max_words = 4;
  int n = 1000;
  int s = 10;
  double eps_voc = 1.0;
  uint64_t seed = 42;
  std::string out;
};

absl::Status RunPrivatize(const PrivatizeArgs& a) {
  DPKPS_ASSIGN_OR_RETURN(PublicVocabulary vocab,
                         LoadVocabulary(a.vocab, a.max_words));
  DPKPS_ASSIGN_OR_RETURN(std::vector<ExtractedSequence> extracted,
                         LoadExtracted(a.extracted, vocab, false));
  BuildConfig config;
  config.s_per_doc = a.s;
  config.vocab_size = a.n;
  DPKPS_ASSIGN_OR_RETURN(config.eps_voc, Epsilon::FromDouble(a.eps_voc));
  config.seed = a.seed;
  BudgetLedger ledger;
  DPKPS_ASSIGN_OR_RETURN(
      PrivatizedVocabulary released,
      PrivatizeCorpusVocabulary(extracted, vocab, config, ledger));
  DPKPS_RETURN_IF_ERROR(SavePrivatizedVocabulary(released, a.s, a.seed, a.out));
  LOG(INFO) << "released " << released.size() << " terms at epsilon "
            << released.epsilon.ToString() << " to " << a.out;
  return absl::OkStatus();
}

// --- build-kde ---------------------------------------------------------------

struct BuildKdeArgs {
  std::string extracted;
  std::string vocab;
  int max_words = 4;
  std::string vocab_priv;
  std::string embeddings;
  int dim = 0;
  std::string mode = "log";
  int max_length = 10;
  double eps_kde = 5.0;
  int features = 2000;
  uint64_t seed = 7;
  double cap = 0;
  std::string out;
};

absl::Status RunBuildKde(const BuildKdeArgs& a) {
  DPKPS_ASSIGN_OR_RETURN(PublicVocabulary vocab,
                         LoadVocabulary(a.vocab, a.max_words));
  DPKPS_ASSIGN_OR_RETURN(std::vector<ExtractedSequence> extracted,
                         LoadExtracted(a.extracted, vocab, false));
  DPKPS_ASSIGN_OR_RETURN(LoadedVocabulary loaded,
                         LoadPrivatizedVocabulary(a.vocab_priv, vocab));
  DPKPS_ASSIGN_OR_RETURN(EmbeddingTable full, LoadEmbeddings(a.embeddings, a.dim));

  BuildConfig config;
  config.s_per_doc = loaded.s_per_doc;
  DPKPS_ASSIGN_OR_RETURN(config.ensemble, ParseEnsembleKind(a.mode));
  config.max_length = a.max_length;
  DPKPS_ASSIGN_OR_RETURN(config.eps_kde, Epsilon::FromDouble(a.eps_kde));
  config.num_features = a.features;
  config.seed = a.seed;
  DPKPS_ASSIGN_OR_RETURN(config.cap, OptionalCap(a.cap));

  ReleasedModel model;
  model.ledger = BudgetLedger(config.cap);
  model.s_per_doc = loaded.s_per_doc;
  model.vocab = std::move(loaded.released);
  DPKPS_RETURN_IF_ERROR(
      model.ledger.Charge(kVocabularyMechanism, model.vocab.epsilon));
  DPKPS_ASSIGN_OR_RETURN(model.table, RestrictToReleased(model.vocab, full));
  DPKPS_ASSIGN_OR_RETURN(
      model.classes, BuildClassEnsembles(extracted, vocab, model.vocab,
                                         model.table, config, model.ledger));
  DPKPS_RETURN_IF_ERROR(SaveModel(model, a.out));
  LOG(INFO) << "wrote " << model.classes.size() << " class ensembles to "
            << a.out << "; total epsilon " << model.ledger.total().ToString();
  return absl::OkStatus();
}

// --- sample ------------------------------------------------------------------

struct SampleArgs {
  std::string ensemble;
  std::string mode = "iterative";
  std::string strategy = "multinomial";
  int length = 0;
  int count = 1500;
  uint64_t seed = 11;
  int threads = 1;
  std::string out = "-";
};

absl::Status RunSample(const SampleArgs& a) {
  DPKPS_ASSIGN_OR_RETURN(ReleasedModel model, LoadModel(a.ensemble));
  SampleConfig config;
  DPKPS_ASSIGN_OR_RETURN(config.mode, ParseSamplingMode(a.mode));
  DPKPS_ASSIGN_OR_RETURN(config.strategy, SelectionStrategy::Parse(a.strategy));
  config.length =
      a.length > 0 ? a.length : model.classes.front().ensemble.max_length();
  config.count_per_class = a.count;
  config.seed = a.seed;
  config.num_threads = a.threads;
  DPKPS_ASSIGN_OR_RETURN(SampleResult result, SampleSequences(model, config));
  LOG(INFO) << "sampled " << result.sequences.size() << " sequences with "
            << result.kde_queries << " KDE queries";
  return WriteOutput(a.out, [&](std::ostream& out) {
    WriteSequences(result.sequences, out);
  });
}

// --- generate ----------------------------------------------------------------

struct GenerateArgs {
  std::string sequences;
  std::string doc_type = "document";
  std::string instruction;
  std::string connector = "mock";
  uint64_t mock_seed = 0;
  std::string few_shot;
  int concurrency = 8;
  int max_tokens = 1024;
  double temperature = 1.0;
  int timeout_ms = 60'000;
  std::string audit_log;
  std::string out = "-";
};

absl::Status RunGenerate(const GenerateArgs& a) {
  DPKPS_ASSIGN_OR_RETURN(std::vector<KeyphraseSequence> seqs,
                         LoadSequences(a.sequences));
  PromptTemplate tmpl;
  tmpl.doc_type = a.doc_type;
  if (!a.instruction.empty()) tmpl.instruction = a.instruction;
  if (!a.few_shot.empty()) {
    DPKPS_ASSIGN_OR_RETURN(tmpl.few_shot, LoadFewShot(a.few_shot));
  }

  std::unique_ptr<GeneratorConnector> inner;
  if (a.connector == "mock") {
    inner = MakeMockConnector(a.mock_seed);
  } else if (a.connector == "http") {
    DPKPS_ASSIGN_OR_RETURN(HttpConnectorConfig config,
                           HttpConnectorConfigFromEnv());
    config.max_tokens = a.max_tokens;
    config.temperature = a.temperature;
    config.timeout = std::chrono::milliseconds(a.timeout_ms);
    DPKPS_ASSIGN_OR_RETURN(inner, MakeHttpConnector(config));
  } else {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown connector \"", a.connector, "\""));
  }
  AuditingConnector connector(*inner);

  GenerateOptions options;
  options.concurrency = a.concurrency;
  options.max_tokens = a.max_tokens;
  DPKPS_ASSIGN_OR_RETURN(GenerationResult result,
                         GenerateCorpus(seqs, tmpl, connector, options));
  for (const SkippedPrompt& s : result.skipped) {
    LOG(WARNING) << "skipped sequence " << s.index << ": " << s.reason;
  }
  if (!a.audit_log.empty()) {
    DPKPS_RETURN_IF_ERROR(WriteOutput(a.audit_log, [&](std::ostream& out) {
      for (const std::string& p : connector.payloads()) {
        out << nlohmann::json(p).dump() << '\n';
      }
    }));
  }
  std::cerr << "prompts dispatched: " << result.prompts_dispatched
            << ", documents: " << result.documents.size()
            << ", skipped: " << result.skipped.size() << "\n";
  return WriteOutput(a.out, [&](std::ostream& out) {
    WriteSyntheticCorpus(result.documents, out);
  });
}

// --- audit -------------------------------------------------------------------

struct AuditArgs {
  std::string run;
  bool json = false;
};

absl::Status RunAudit(const AuditArgs& a) {
  DPKPS_ASSIGN_OR_RETURN(std::string text,
                         ReadFile((fs::path(a.run) / "budget.json").string()));
  DPKPS_ASSIGN_OR_RETURN(BudgetLedger ledger, BudgetLedger::FromJson(text));
  const AuditReport report = Audit(ledger);
  std::cout << (a.json ? report.json : report.text);
  if (fs::exists(fs::path(a.run) / "manifest.json")) {
    // LoadModel checks the ledger against every sketch artifact.
    auto model = LoadModel(a.run);
    if (!model.ok()) {
      return absl::FailedPreconditionError(absl::StrCat(
          "ledger inconsistent with artifacts: ", model.status().message()));
    }
    if (!a.json) std::cout << "artifacts: consistent with ledger\n";
  }
  return absl::OkStatus();
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string mode = "compare";
  std::string spec;
  std::string grid;
  std::string out = "-";
};

absl::Status RunEval(const EvalArgs& a) {
  if (a.mode != "compare") {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown eval mode \"", a.mode, "\""));
  }
  DPKPS_ASSIGN_OR_RETURN(std::string spec_text, ReadFile(a.spec));
  DPKPS_ASSIGN_OR_RETURN(ToyCorpusSpec spec, ToyCorpusSpec::FromJson(spec_text));
  DPKPS_ASSIGN_OR_RETURN(std::string grid_text, ReadFile(a.grid));
  DPKPS_ASSIGN_OR_RETURN(EvalGrid grid, EvalGrid::FromJson(grid_text));
  DPKPS_ASSIGN_OR_RETURN(ToyCorpus corpus, SynthCorpus(spec));
  DPKPS_ASSIGN_OR_RETURN(ComparisonTable table, CompareModes(corpus, grid));
  std::cout << table.ToText();
  if (a.out == "-") return absl::OkStatus();
  return WriteOutput(a.out, [&](std::ostream& out) { out << table.ToJson(); });
}

// --- run ---------------------------------------------------------------------

struct RunArgs {
  std::string corpus;
  std::string vocab;
  int max_words = 4;
  std::string embeddings;
  int dim = 0;
  int s = 10;
  int n = 1000;
  double eps_voc = 1.0;
  double eps_kde = 5.0;
  std::string ensemble = "log";
  std::string mode = "iterative";
  std::string strategy = "multinomial";
  int length = 10;
  int count = 1500;
  int features = 2000;
  uint64_t seed = 7;
  uint64_t sample_seed = 11;
  int threads = 1;
  double cap = 0;
  std::string out;
};

absl::Status RunAll(const RunArgs& a) {
  DPKPS_ASSIGN_OR_RETURN(std::vector<Document> docs, LoadCorpus(a.corpus));
  DPKPS_ASSIGN_OR_RETURN(PublicVocabulary vocab,
                         LoadVocabulary(a.vocab, a.max_words));
  DPKPS_ASSIGN_OR_RETURN(EmbeddingTable table, LoadEmbeddings(a.embeddings, a.dim));

  PipelineConfig config;
  BuildConfig& b = config.build;
  b.s_per_doc = a.s;
  b.vocab_size = a.n;
  DPKPS_ASSIGN_OR_RETURN(b.eps_voc, Epsilon::FromDouble(a.eps_voc));
  DPKPS_ASSIGN_OR_RETURN(b.eps_kde, Epsilon::FromDouble(a.eps_kde));
  DPKPS_ASSIGN_OR_RETURN(b.ensemble, ParseEnsembleKind(a.ensemble));
  b.max_length = a.length;
  b.num_features = a.features;
  b.seed = a.seed;
  DPKPS_ASSIGN_OR_RETURN(b.cap, OptionalCap(a.cap));
  SampleConfig& s = config.sample;
  DPKPS_ASSIGN_OR_RETURN(s.mode, ParseSamplingMode(a.mode));
  DPKPS_ASSIGN_OR_RETURN(s.strategy, SelectionStrategy::Parse(a.strategy));
  s.length = a.length;
  s.count_per_class = a.count;
  s.seed = a.sample_seed;
  s.num_threads = a.threads;

  DPKPS_ASSIGN_OR_RETURN(PipelineRun run,
                         RunPipeline(docs, vocab, table, config));
  DPKPS_RETURN_IF_ERROR(SaveModel(run.model, a.out));
  DPKPS_RETURN_IF_ERROR(WriteOutput(
      (fs::path(a.out) / "sequences.jsonl").string(),
      [&](std::ostream& out) { WriteSequences(run.sequences, out); }));
  std::cout << Audit(run.model.ledger).text;
  return absl::OkStatus();
}

int Report(const absl::Status& status) {
  if (status.ok()) return 0;
  std::cerr << "dpkps: " << status.ToString() << "\n";
  return 1;
}

}  // namespace
}  // namespace dpkps

int main(int argc, char** argv) {
  using namespace dpkps;  // NOLINT
  google::InitGoogleLogging(argv[0]);
  FLAGS_logtostderr = true;

  CLI::App app{"Keyphrase-seeded differentially private synthetic text"};
  app.require_subcommand(1);

  ExtractArgs extract;
  auto* ex = app.add_subcommand("extract", "First S vocabulary terms per document");
  ex->add_option("--corpus", extract.corpus, "JSON-lines corpus")->required();
  ex->add_option("--vocab", extract.vocab, "Public vocabulary, one term per line")
      ->required();
  ex->add_option("--limit", extract.limit, "Terms kept per document (S)");
  ex->add_option("--max-words", extract.max_words, "Longest vocabulary phrase");
  ex->add_option("--out", extract.out, "Output path, - for stdout");

  PrivatizeArgs priv;
  auto* pv = app.add_subcommand("privatize-vocab", "Noisy top-N vocabulary");
  pv->add_option("--extracted", priv.extracted)->required();
  pv->add_option("--vocab", priv.vocab)->required();
  pv->add_option("--max-words", priv.max_words);
  pv->add_option("--n", priv.n, "Released vocabulary size (N)");
  pv->add_option("--s", priv.s, "Terms per document (S)");
  pv->add_option("--eps-voc", priv.eps_voc);
  pv->add_option("--seed", priv.seed);
  pv->add_option("--out", priv.out, "Terms file; a .manifest.json is written next to it")
      ->required();

  BuildKdeArgs bk;
  auto* bkc = app.add_subcommand("build-kde", "Per-class DP-KDE ensembles");
  bkc->add_option("--extracted", bk.extracted)->required();
  bkc->add_option("--vocab", bk.vocab)->required();
  bkc->add_option("--max-words", bk.max_words);
  bkc->add_option("--vocab-priv", bk.vocab_priv)->required();
  bkc->add_option("--embeddings", bk.embeddings)->required();
  bkc->add_option("--dim", bk.dim, "Embedding dimension; 0 infers it");
  bkc->add_option("--mode", bk.mode)
      ->check(CLI::IsMember({"independent", "linear", "log"}));
  bkc->add_option("--L", bk.max_length);
  bkc->add_option("--eps-kde", bk.eps_kde);
  bkc->add_option("--features", bk.features);
  bkc->add_option("--seed", bk.seed);
  bkc->add_option("--cap", bk.cap, "Total epsilon cap; 0 for none");
  bkc->add_option("--out", bk.out, "Run directory")->required();

  SampleArgs sa;
  auto* sac = app.add_subcommand("sample", "Keyphrase sequences from a run directory");
  sac->add_option("--ensemble", sa.ensemble, "Run directory")->required();
  sac->add_option("--mode", sa.mode)
      ->check(CLI::IsMember({"independent", "iterative"}));
  sac->add_option("--strategy", sa.strategy, "greedy, multinomial or topk:K");
  sac->add_option("--L", sa.length, "Sequence length; 0 uses the ensemble's");
  sac->add_option("--count", sa.count, "Sequences per class");
  sac->add_option("--seed", sa.seed);
  sac->add_option("--threads", sa.threads);
  sac->add_option("--out", sa.out);

  GenerateArgs ge;
  auto* gec = app.add_subcommand("generate", "Synthetic documents from sequences");
  gec->add_option("--sequences", ge.sequences)->required();
  gec->add_option("--doc-type", ge.doc_type);
  gec->add_option("--instruction", ge.instruction,
                  "Template with {terms} and optional {doc_type}");
  gec->add_option("--connector", ge.connector)
      ->check(CLI::IsMember({"mock", "http"}));
  gec->add_option("--mock-seed", ge.mock_seed);
  gec->add_option("--few-shot", ge.few_shot);
  gec->add_option("--concurrency", ge.concurrency);
  gec->add_option("--max-tokens", ge.max_tokens);
  gec->add_option("--temperature", ge.temperature);
  gec->add_option("--timeout-ms", ge.timeout_ms);
  gec->add_option("--audit-log", ge.audit_log, "Record every outbound prompt");
  gec->add_option("--out", ge.out);

  AuditArgs au;
  auto* auc = app.add_subcommand("audit", "Privacy budget report for a run");
  auc->add_option("--run", au.run)->required();
  auc->add_flag("--json", au.json);

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "Toy-corpus mode comparison");
  evc->add_option("--mode", ev.mode);
  evc->add_option("--spec", ev.spec)->required();
  evc->add_option("--grid", ev.grid)->required();
  evc->add_option("--out", ev.out);

  RunArgs ru;
  auto* ruc = app.add_subcommand("run", "Whole pipeline into a run directory");
  ruc->add_option("--corpus", ru.corpus)->required();
  ruc->add_option("--vocab", ru.vocab)->required();
  ruc->add_option("--max-words", ru.max_words);
  ruc->add_option("--embeddings", ru.embeddings)->required();
  ruc->add_option("--dim", ru.dim);
  ruc->add_option("--s", ru.s);
  ruc->add_option("--n", ru.n);
  ruc->add_option("--eps-voc", ru.eps_voc);
  ruc->add_option("--eps-kde", ru.eps_kde);
  ruc->add_option("--ensemble", ru.ensemble)
      ->check(CLI::IsMember({"independent", "linear", "log"}));
  ruc->add_option("--mode", ru.mode)
      ->check(CLI::IsMember({"independent", "iterative"}));
  ruc->add_option("--strategy", ru.strategy);
  ruc->add_option("--L", ru.length);
  ruc->add_option("--count", ru.count);
  ruc->add_option("--features", ru.features);
  ruc->add_option("--seed", ru.seed);
  ruc->add_option("--sample-seed", ru.sample_seed);
  ruc->add_option("--threads", ru.threads);
  ruc->add_option("--cap", ru.cap);
  ruc->add_option("--out", ru.out, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (*ex) return Report(RunExtract(extract));
  if (*pv) return Report(RunPrivatize(priv));
  if (*bkc) return Report(RunBuildKde(bk));
  if (*sac) return Report(RunSample(sa));
  if (*gec) return Report(RunGenerate(ge));
  if (*auc) return Report(RunAudit(au));
  if (*evc) return Report(RunEval(ev));
  if (*ruc) return Report(RunAll(ru));
  return 1;
}
