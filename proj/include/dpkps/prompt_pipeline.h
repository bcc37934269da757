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

#ifndef DPKPS_PROMPT_PIPELINE_H_
#define DPKPS_PROMPT_PIPELINE_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "dpkps/sequence_sampler.h"

namespace dpkps {

// A client-supplied example document and the keyphrases it was written from.
struct FewShotExample {
  std::string text;
  std::vector<std::string> terms;
};

struct PromptTemplate {
  std::string doc_type = "document";
  // "{terms}" is replaced by the comma-separated keyphrases and is required;
  // "{doc_type}" is optional.
  std::string instruction =
      "write a {doc_type} that contains the following terms: {terms}";
  std::vector<FewShotExample> few_shot;
};

// Few-shot files: one {"text", "terms": [...]} object per line.
absl::StatusOr<std::vector<FewShotExample>> LoadFewShot(
    const std::string& path);

// The only thing a GeneratorConnector ever receives. It can be created only by
// RenderPrompt, which accepts released keyphrase sequences and nothing else.
class RenderedPrompt {
 public:
  const std::string& text() const { return text_; }
  const std::vector<std::string>& terms() const { return terms_; }

 private:
  friend absl::StatusOr<RenderedPrompt> RenderPrompt(
      const PromptTemplate& tmpl, const KeyphraseSequence& sequence);
  RenderedPrompt(std::string text, std::vector<std::string> terms)
      : text_(std::move(text)), terms_(std::move(terms)) {}

  std::string text_;
  std::vector<std::string> terms_;
};

// Few-shot examples (if any) come first, then the instruction. The class
// label is never rendered. Sequences without sampler provenance are refused.
absl::StatusOr<RenderedPrompt> RenderPrompt(const PromptTemplate& tmpl,
                                            const KeyphraseSequence& sequence);

class GeneratorConnector {
 public:
  virtual ~GeneratorConnector() = default;
  // Called concurrently from several threads.
  virtual absl::StatusOr<std::string> Send(const RenderedPrompt& prompt) = 0;
  virtual std::string id() const = 0;
};

// Deterministic offline generator: a fixed paragraph listing the prompt's
// keyphrases plus a filler code hashed from (seed, prompt text).
std::unique_ptr<GeneratorConnector> MakeMockConnector(uint64_t seed);

struct HttpConnectorConfig {
  // e.g. "http://localhost:8080/generate" or an https:// URL.
  std::string endpoint;
  std::string token;
  std::chrono::milliseconds timeout{60'000};
  int max_tokens = 1024;
  double temperature = 1.0;
};

// Reads DPKPS_GEN_ENDPOINT (required) and DPKPS_GEN_TOKEN (optional).
absl::StatusOr<HttpConnectorConfig> HttpConnectorConfigFromEnv();

// POSTs {"prompt", "max_tokens", "temperature"} and expects {"text"}.
absl::StatusOr<std::unique_ptr<GeneratorConnector>> MakeHttpConnector(
    const HttpConnectorConfig& config);

std::string EncodeGenerationRequest(const RenderedPrompt& prompt,
                                    int max_tokens, double temperature);
absl::StatusOr<std::string> DecodeGenerationResponse(const std::string& body);

// Forwards to `inner`, recording every outbound prompt text first.
class AuditingConnector : public GeneratorConnector {
 public:
  explicit AuditingConnector(GeneratorConnector& inner) : inner_(inner) {}

  absl::StatusOr<std::string> Send(const RenderedPrompt& prompt) override;
  std::string id() const override { return inner_.id(); }

  std::vector<std::string> payloads() const;

 private:
  GeneratorConnector& inner_;
  mutable std::mutex mu_;
  std::vector<std::string> payloads_;
};

struct RetryPolicy {
  // Sends after the first failure; a prompt is attempted at most
  // 1 + max_retries times.
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  // Injectable for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GenerateOptions {
  int concurrency = 8;
  RetryPolicy retry;
  // The run aborts once more than this fraction of prompts has failed.
  double max_failure_fraction = 0.2;
  int max_tokens = 1024;
};

struct SyntheticDocument {
  std::string text;
  std::string label;
  KeyphraseSequence source;
  std::string generator_id;
};

struct SkippedPrompt {
  int index = 0;
  std::string reason;
};

struct GenerationResult {
  // In input order.
  std::vector<SyntheticDocument> documents;
  std::vector<SkippedPrompt> skipped;
  int prompts_dispatched = 0;
  int send_attempts = 0;
};

// One prompt per sequence. Failed prompts are retried with exponential
// backoff, then skipped; too many skips abort the run.
absl::StatusOr<GenerationResult> GenerateCorpus(
    std::span<const KeyphraseSequence> sequences, const PromptTemplate& tmpl,
    GeneratorConnector& connector, const GenerateOptions& options);

// JSON lines {"text", "label", "terms", "generator_id"}.
void WriteSyntheticCorpus(std::span<const SyntheticDocument> docs,
                          std::ostream& out);

}  // namespace dpkps

#endif  // DPKPS_PROMPT_PIPELINE_H_
