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

#include "dpkps/prompt_pipeline.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <thread>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_replace.h"
#include "dpkps/random.h"
#include "glog/logging.h"
#include "httplib.h"
#include "json.hpp"

namespace dpkps {
namespace {

using nlohmann::json;

constexpr char kTermsSlot[] = "{terms}";

class MockConnector : public GeneratorConnector {
 public:
  explicit MockConnector(uint64_t seed) : seed_(seed) {}

  absl::StatusOr<std::string> Send(const RenderedPrompt& prompt) override {
    const uint64_t code =
        Fnv1a64(prompt.text(), Fnv1a64(absl::StrCat("mock:", seed_)));
    return absl::StrFormat(
        "This document was written around the following topics: %s. Each "
        "of them is discussed in turn. Reference %016x.",
        absl::StrJoin(prompt.terms(), ", "), code);
  }

  std::string id() const override { return absl::StrCat("mock:", seed_); }

 private:
  uint64_t seed_;
};

class HttpConnector : public GeneratorConnector {
 public:
  HttpConnector(HttpConnectorConfig config, std::string base, std::string path)
      : config_(std::move(config)),
        base_(std::move(base)),
        path_(std::move(path)) {}

  absl::StatusOr<std::string> Send(const RenderedPrompt& prompt) override {
    // httplib clients are not thread-safe; one per call.
    httplib::Client client(base_);
    const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(
        config_.timeout);
    const auto timeout_us =
        std::chrono::duration_cast<std::chrono::microseconds>(
            config_.timeout - timeout_s);
    client.set_connection_timeout(timeout_s.count(), timeout_us.count());
    client.set_read_timeout(timeout_s.count(), timeout_us.count());
    client.set_write_timeout(timeout_s.count(), timeout_us.count());
    httplib::Headers headers;
    if (!config_.token.empty()) {
      headers.emplace("Authorization", absl::StrCat("Bearer ", config_.token));
    }
    const std::string body = EncodeGenerationRequest(
        prompt, config_.max_tokens, config_.temperature);
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      return absl::UnavailableError(absl::StrCat(
          "request to ", base_, path_, " failed: ", httplib::to_string(res.error())));
    }
    if (res->status != 200) {
      return absl::UnavailableError(
          absl::StrCat("generator returned HTTP ", res->status));
    }
    return DecodeGenerationResponse(res->body);
  }

  std::string id() const override { return absl::StrCat("http:", base_, path_); }

 private:
  HttpConnectorConfig config_;
  std::string base_;
  std::string path_;
};

std::string RenderInstruction(const PromptTemplate& tmpl,
                              const std::vector<std::string>& terms) {
  return absl::StrReplaceAll(tmpl.instruction,
                             {{"{doc_type}", tmpl.doc_type},
                              {kTermsSlot, absl::StrJoin(terms, ", ")}});
}

}  // namespace

absl::StatusOr<std::vector<FewShotExample>> LoadFewShot(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::vector<FewShotExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      return absl::InvalidArgumentError(
          absl::StrCat(path, ": line ", line_no, ": not a JSON object"));
    }
    try {
      out.push_back(FewShotExample{
          .text = obj.at("text").get<std::string>(),
          .terms = obj.at("terms").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      return absl::InvalidArgumentError(
          absl::StrCat(path, ": line ", line_no, ": ", e.what()));
    }
  }
  return out;
}

absl::StatusOr<RenderedPrompt> RenderPrompt(const PromptTemplate& tmpl,
                                            const KeyphraseSequence& sequence) {
  if (tmpl.instruction.find(kTermsSlot) == std::string::npos) {
    return absl::InvalidArgumentError(
        "prompt template has no {terms} slot for the keyphrases");
  }
  if (sequence.sampler.empty()) {
    return absl::FailedPreconditionError(
        "sequence has no sampler provenance; only released keyphrase "
        "sequences may be sent to a generator");
  }
  if (sequence.terms.empty()) {
    return absl::InvalidArgumentError("empty keyphrase sequence");
  }
  std::string text;
  if (!tmpl.few_shot.empty()) {
    absl::StrAppend(&text, "Here are example ", tmpl.doc_type,
                    "s together with the terms each one contains.\n\n");
    for (size_t i = 0; i < tmpl.few_shot.size(); ++i) {
      const FewShotExample& ex = tmpl.few_shot[i];
      absl::StrAppend(&text, "Example ", i + 1, " (terms: ",
                      absl::StrJoin(ex.terms, ", "), "):\n", ex.text, "\n\n");
    }
    absl::StrAppend(&text, "Following the style of the examples, ");
  }
  absl::StrAppend(&text, RenderInstruction(tmpl, sequence.terms));
  return RenderedPrompt(std::move(text), sequence.terms);
}

std::unique_ptr<GeneratorConnector> MakeMockConnector(uint64_t seed) {
  return std::make_unique<MockConnector>(seed);
}

absl::StatusOr<HttpConnectorConfig> HttpConnectorConfigFromEnv() {
  HttpConnectorConfig config;
  const char* endpoint = std::getenv("DPKPS_GEN_ENDPOINT");
  if (endpoint == nullptr || *endpoint == '\0') {
    return absl::FailedPreconditionError("DPKPS_GEN_ENDPOINT is not set");
  }
  config.endpoint = endpoint;
  if (const char* token = std::getenv("DPKPS_GEN_TOKEN")) config.token = token;
  return config;
}

absl::StatusOr<std::unique_ptr<GeneratorConnector>> MakeHttpConnector(
    const HttpConnectorConfig& config) {
  const std::string& url = config.endpoint;
  const size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    return absl::InvalidArgumentError(
        absl::StrCat("endpoint \"", url, "\" has no scheme"));
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    return absl::InvalidArgumentError(
        absl::StrCat("unsupported scheme \"", scheme, "\""));
  }
  const size_t path_start = url.find('/', scheme_end + 3);
  std::string base = url.substr(0, path_start);
  std::string path =
      path_start == std::string::npos ? "/" : url.substr(path_start);
  return std::make_unique<HttpConnector>(config, std::move(base),
                                         std::move(path));
}

std::string EncodeGenerationRequest(const RenderedPrompt& prompt,
                                    int max_tokens, double temperature) {
  return json{{"prompt", prompt.text()},
              {"max_tokens", max_tokens},
              {"temperature", temperature}}
      .dump();
}

absl::StatusOr<std::string> DecodeGenerationResponse(const std::string& body) {
  json obj = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (obj.is_discarded() || !obj.is_object()) {
    return absl::DataLossError("generator response is not a JSON object");
  }
  auto it = obj.find("text");
  if (it == obj.end() || !it->is_string()) {
    return absl::DataLossError("generator response has no \"text\" string");
  }
  return it->get<std::string>();
}

absl::StatusOr<std::string> AuditingConnector::Send(
    const RenderedPrompt& prompt) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    payloads_.push_back(prompt.text());
  }
  return inner_.Send(prompt);
}

std::vector<std::string> AuditingConnector::payloads() const {
  std::lock_guard<std::mutex> lock(mu_);
  return payloads_;
}

absl::StatusOr<GenerationResult> GenerateCorpus(
    std::span<const KeyphraseSequence> sequences, const PromptTemplate& tmpl,
    GeneratorConnector& connector, const GenerateOptions& options) {
  const int n = static_cast<int>(sequences.size());
  // Render everything up front so a bad template or an unreleased sequence
  // fails before anything leaves the process.
  std::vector<RenderedPrompt> prompts;
  prompts.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto prompt = RenderPrompt(tmpl, sequences[i]);
    if (!prompt.ok()) {
      return absl::Status(prompt.status().code(),
                          absl::StrCat("sequence ", i, ": ",
                                       prompt.status().message()));
    }
    prompts.push_back(*std::move(prompt));
  }

  auto sleep = options.retry.sleep;
  if (!sleep) {
    sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  const int max_failures =
      static_cast<int>(options.max_failure_fraction * n);

  std::vector<std::optional<std::string>> texts(n);
  std::vector<std::string> failures(n);
  std::atomic<int> next{0};
  std::atomic<int> failed{0};
  std::atomic<int> dispatched{0};
  std::atomic<int> attempts{0};
  std::atomic<bool> abort{false};

  auto worker = [&] {
    for (int i = next.fetch_add(1); i < n && !abort.load();
         i = next.fetch_add(1)) {
      dispatched.fetch_add(1);
      std::chrono::milliseconds backoff = options.retry.initial_backoff;
      absl::Status last;
      for (int attempt = 0; attempt <= options.retry.max_retries; ++attempt) {
        if (attempt > 0) {
          sleep(backoff);
          backoff *= 2;
        }
        attempts.fetch_add(1);
        auto text = connector.Send(prompts[i]);
        VLOG(1) << "prompt " << i << " attempt " << attempt + 1 << ": "
                << (text.ok() ? "ok" : text.status().ToString());
        if (text.ok()) {
          texts[i] = *std::move(text);
          break;
        }
        last = text.status();
      }
      if (!texts[i].has_value()) {
        failures[i] = last.ToString();
        LOG(WARNING) << "skipping prompt " << i << " after "
                     << options.retry.max_retries + 1
                     << " attempts: " << failures[i];
        if (failed.fetch_add(1) + 1 > max_failures) abort.store(true);
      }
    }
  };
  {
    const int threads = std::clamp(options.concurrency, 1, std::max(n, 1));
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  if (abort.load()) {
    return absl::AbortedError(absl::StrCat(
        failed.load(), " of ", n, " prompts failed, above the limit of ",
        options.max_failure_fraction * 100, "%"));
  }

  GenerationResult result;
  result.prompts_dispatched = dispatched.load();
  result.send_attempts = attempts.load();
  for (int i = 0; i < n; ++i) {
    if (texts[i].has_value()) {
      result.documents.push_back(SyntheticDocument{
          .text = *std::move(texts[i]),
          .label = sequences[i].label,
          .source = sequences[i],
          .generator_id = connector.id()});
    } else {
      result.skipped.push_back(SkippedPrompt{i, failures[i]});
    }
  }
  LOG(INFO) << "dispatched " << result.prompts_dispatched << " prompts ("
            << result.send_attempts << " sends), " << result.documents.size()
            << " documents, " << result.skipped.size() << " skipped";
  return result;
}

void WriteSyntheticCorpus(std::span<const SyntheticDocument> docs,
                          std::ostream& out) {
  for (const SyntheticDocument& doc : docs) {
    out << json{{"text", doc.text},
                {"label", doc.label},
                {"terms", doc.source.terms},
                {"generator_id", doc.generator_id}}
               .dump()
        << '\n';
  }
}

}  // namespace dpkps
