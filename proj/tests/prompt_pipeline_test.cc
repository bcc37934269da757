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

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "dpkps/corpus_io.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "httplib.h"
#include "json.hpp"

namespace dpkps {
namespace {

using ::testing::ElementsAre;
using ::testing::HasSubstr;
using ::testing::Not;

// Raw private material must not be able to become a connector payload.
static_assert(!std::is_convertible_v<Document, RenderedPrompt>);
static_assert(!std::is_constructible_v<RenderedPrompt, Document>);
static_assert(!std::is_constructible_v<RenderedPrompt, std::string>);
static_assert(!std::is_constructible_v<RenderedPrompt, std::string,
                                       std::vector<std::string>>);

KeyphraseSequence Seq(std::vector<std::string> terms,
                      std::string label = "label") {
  return KeyphraseSequence{std::move(terms), std::move(label),
                           "iterative/greedy", 1};
}

TEST(RenderPromptTest, InstructionOnly) {
  PromptTemplate t;
  t.doc_type = "medical record";
  auto p = RenderPrompt(t, Seq({"a", "b"}));
  ASSERT_TRUE(p.ok()) << p.status();
  EXPECT_EQ(p->text(),
            "write a medical record that contains the following terms: a, b");
  EXPECT_THAT(p->terms(), ElementsAre("a", "b"));
}

TEST(RenderPromptTest, NeverIncludesLabel) {
  PromptTemplate t;
  auto p = RenderPrompt(t, Seq({"x", "y"}, "cardiology_secret"));
  ASSERT_TRUE(p.ok());
  EXPECT_THAT(p->text(), Not(HasSubstr("cardiology_secret")));
}

TEST(RenderPromptTest, FewShotExamplesPrecedeInstruction) {
  PromptTemplate t;
  t.doc_type = "article";
  for (int i = 0; i < 6; ++i) {
    t.few_shot.push_back(
        {"example text number " + std::to_string(i), {"k" + std::to_string(i)}});
  }
  auto p = RenderPrompt(t, Seq({"alpha", "beta"}));
  ASSERT_TRUE(p.ok());
  const size_t instr = p->text().find("write a article that contains");
  ASSERT_NE(instr, std::string::npos);
  for (int i = 0; i < 6; ++i) {
    const size_t pos = p->text().find("example text number " + std::to_string(i));
    ASSERT_NE(pos, std::string::npos);
    EXPECT_LT(pos, instr);
  }
  EXPECT_EQ(RenderPrompt(t, Seq({"alpha", "beta"}))->text(), p->text());
}

TEST(RenderPromptTest, Errors) {
  PromptTemplate t;
  t.instruction = "write something";
  EXPECT_EQ(RenderPrompt(t, Seq({"a"})).status().code(),
            absl::StatusCode::kInvalidArgument);
  PromptTemplate ok;
  EXPECT_FALSE(RenderPrompt(ok, Seq({})).ok());
  KeyphraseSequence untagged{{"a"}, "x", "", 0};
  EXPECT_EQ(RenderPrompt(ok, untagged).status().code(),
            absl::StatusCode::kFailedPrecondition);
}

TEST(MockConnectorTest, DeterministicAndEchoesTerms) {
  auto mock = MakeMockConnector(3);
  const RenderedPrompt p = *RenderPrompt(PromptTemplate(), Seq({"x", "y"}));
  const std::string a = *mock->Send(p);
  EXPECT_EQ(*mock->Send(p), a);
  EXPECT_THAT(a, HasSubstr("x"));
  EXPECT_THAT(a, HasSubstr("y"));
  EXPECT_NE(*MakeMockConnector(4)->Send(p), a);
  EXPECT_EQ(mock->id(), "mock:3");
}

TEST(MockConnectorTest, DistinctPromptsGiveDistinctOutputs) {
  auto mock = MakeMockConnector(1);
  std::set<std::string> outputs;
  for (int i = 0; i < 10000; ++i) {
    const RenderedPrompt p = *RenderPrompt(
        PromptTemplate(),
        Seq({"t" + std::to_string(i % 100), "u" + std::to_string(i / 100)}));
    outputs.insert(*mock->Send(p));
  }
  EXPECT_EQ(outputs.size(), 10000u);
}

// Fails the first `failures` sends of every prompt whose first term is in
// `flaky`, or every send when `failures` is negative.
class FlakyConnector : public GeneratorConnector {
 public:
  FlakyConnector(std::set<std::string> flaky, int failures)
      : flaky_(std::move(flaky)), failures_(failures) {}

  absl::StatusOr<std::string> Send(const RenderedPrompt& prompt) override {
    ++attempts_;
    const std::string& key = prompt.terms().front();
    if (flaky_.contains(key)) {
      std::lock_guard<std::mutex> lock(mu_);
      if (failures_ < 0 || seen_[key]++ < failures_) {
        return absl::UnavailableError("simulated outage");
      }
    }
    return "text about " + key;
  }
  std::string id() const override { return "flaky"; }

  std::atomic<int> attempts_{0};

 private:
  std::set<std::string> flaky_;
  int failures_;
  std::mutex mu_;
  std::map<std::string, int> seen_;
};

GenerateOptions FastOptions(std::vector<std::chrono::milliseconds>* sleeps) {
  GenerateOptions o;
  o.concurrency = 4;
  auto mu = std::make_shared<std::mutex>();
  o.retry.sleep = [sleeps, mu](std::chrono::milliseconds d) {
    std::lock_guard<std::mutex> lock(*mu);
    if (sleeps != nullptr) sleeps->push_back(d);
  };
  return o;
}

TEST(GenerateCorpusTest, RetriesThenSucceeds) {
  FlakyConnector conn({"a"}, 3);
  std::vector<std::chrono::milliseconds> sleeps;
  const std::vector<KeyphraseSequence> seqs = {Seq({"a"})};
  auto r = GenerateCorpus(seqs, PromptTemplate(), conn, FastOptions(&sleeps));
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_EQ(r->documents.size(), 1u);
  EXPECT_EQ(r->send_attempts, 4);
  EXPECT_EQ(conn.attempts_.load(), 4);
  EXPECT_EQ(r->prompts_dispatched, 1);
  using std::chrono::milliseconds;
  EXPECT_THAT(sleeps, ElementsAre(milliseconds(1000), milliseconds(2000),
                                  milliseconds(4000)));
}

TEST(GenerateCorpusTest, ExhaustedRetriesAreSkipped) {
  FlakyConnector conn({"p0", "p1"}, -1);
  std::vector<KeyphraseSequence> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back(Seq({"p" + std::to_string(i)}));
  auto r = GenerateCorpus(seqs, PromptTemplate(), conn, FastOptions(nullptr));
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_EQ(r->documents.size(), 8u);
  ASSERT_EQ(r->skipped.size(), 2u);
  EXPECT_EQ(r->skipped[0].index, 0);
  EXPECT_EQ(r->skipped[1].index, 1);
  EXPECT_THAT(r->skipped[0].reason, HasSubstr("simulated outage"));
  EXPECT_EQ(r->send_attempts, 8 + 2 * 4);
  EXPECT_EQ(r->documents.front().source.terms[0], "p2");
}

TEST(GenerateCorpusTest, AbortsAboveTwentyPercentFailures) {
  FlakyConnector conn({"p0", "p1", "p2"}, -1);
  std::vector<KeyphraseSequence> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back(Seq({"p" + std::to_string(i)}));
  GenerateOptions o = FastOptions(nullptr);
  o.concurrency = 1;
  auto r = GenerateCorpus(seqs, PromptTemplate(), conn, o);
  EXPECT_EQ(r.status().code(), absl::StatusCode::kAborted);
}

TEST(GenerateCorpusTest, OnePromptPerSequenceInInputOrder) {
  auto mock = MakeMockConnector(9);
  AuditingConnector audit(*mock);
  std::vector<KeyphraseSequence> seqs;
  for (int i = 0; i < 1000; ++i) {
    seqs.push_back(Seq({"w" + std::to_string(i), "v" + std::to_string(i % 7)},
                       i % 2 ? "odd" : "even"));
  }
  GenerateOptions o = FastOptions(nullptr);
  o.concurrency = 8;
  auto r = GenerateCorpus(seqs, PromptTemplate(), audit, o);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->prompts_dispatched, 1000);
  EXPECT_EQ(audit.payloads().size(), 1000u);
  ASSERT_EQ(r->documents.size(), 1000u);
  for (int i = 0; i < 1000; ++i) {
    const SyntheticDocument& d = r->documents[i];
    EXPECT_EQ(d.source.terms, seqs[i].terms);
    EXPECT_EQ(d.label, seqs[i].label);
    EXPECT_EQ(d.generator_id, "mock:9");
    for (const std::string& t : seqs[i].terms) EXPECT_THAT(d.text, HasSubstr(t));
  }
  for (const std::string& payload : audit.payloads()) {
    EXPECT_THAT(payload, Not(HasSubstr("odd")));
    EXPECT_THAT(payload, Not(HasSubstr("even")));
  }
}

TEST(GenerateCorpusTest, RefusesUnreleasedSequenceBeforeSending) {
  auto mock = MakeMockConnector(1);
  AuditingConnector audit(*mock);
  const std::vector<KeyphraseSequence> seqs = {
      Seq({"a"}), KeyphraseSequence{{"raw", "text"}, "x", "", 0}};
  auto r = GenerateCorpus(seqs, PromptTemplate(), audit, FastOptions(nullptr));
  EXPECT_EQ(r.status().code(), absl::StatusCode::kFailedPrecondition);
  EXPECT_TRUE(audit.payloads().empty());
}

TEST(WireFormatTest, EncodeDecode) {
  const RenderedPrompt p = *RenderPrompt(PromptTemplate(), Seq({"q"}));
  const nlohmann::json j =
      nlohmann::json::parse(EncodeGenerationRequest(p, 1024, 1.0));
  EXPECT_EQ(j["prompt"], p.text());
  EXPECT_EQ(j["max_tokens"], 1024);
  EXPECT_EQ(j["temperature"], 1.0);
  EXPECT_EQ(j.size(), 3u);
  EXPECT_EQ(*DecodeGenerationResponse(R"({"text":"hi"})"), "hi");
  EXPECT_EQ(DecodeGenerationResponse(R"({"txt":"hi"})").status().code(),
            absl::StatusCode::kDataLoss);
  EXPECT_EQ(DecodeGenerationResponse("nope").status().code(),
            absl::StatusCode::kDataLoss);
}

TEST(HttpConnectorTest, TalksToServer) {
  httplib::Server server;
  std::mutex mu;
  std::vector<std::string> bodies, auth;
  server.Post("/v1/generate", [&](const httplib::Request& req,
                                  httplib::Response& res) {
    {
      std::lock_guard<std::mutex> lock(mu);
      bodies.push_back(req.body);
      auth.push_back(req.get_header_value("Authorization"));
    }
    const nlohmann::json in = nlohmann::json::parse(req.body);
    if (in["prompt"].get<std::string>().find("fail") != std::string::npos) {
      res.status = 500;
      return;
    }
    res.set_content(nlohmann::json{{"text", "echo: " + in["prompt"].get<std::string>()}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpConnectorConfig config;
  config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/generate";
  config.token = "secret-token";
  config.timeout = std::chrono::milliseconds(5000);
  auto conn = MakeHttpConnector(config);
  ASSERT_TRUE(conn.ok()) << conn.status();
  const RenderedPrompt p = *RenderPrompt(PromptTemplate(), Seq({"zeta"}));
  auto text = (*conn)->Send(p);
  ASSERT_TRUE(text.ok()) << text.status();
  EXPECT_EQ(*text, "echo: " + p.text());
  const RenderedPrompt bad = *RenderPrompt(PromptTemplate(), Seq({"fail"}));
  EXPECT_EQ((*conn)->Send(bad).status().code(), absl::StatusCode::kUnavailable);
  server.stop();
  t.join();

  ASSERT_EQ(bodies.size(), 2u);
  EXPECT_EQ(auth[0], "Bearer secret-token");
  const nlohmann::json sent = nlohmann::json::parse(bodies[0]);
  EXPECT_EQ(sent["prompt"], p.text());
  EXPECT_EQ(sent["max_tokens"], 1024);
  EXPECT_EQ((*conn)->id(),
            "http:http://127.0.0.1:" + std::to_string(port) + "/v1/generate");
}

TEST(HttpConnectorTest, EndpointValidation) {
  HttpConnectorConfig c;
  c.endpoint = "localhost:80/x";
  EXPECT_FALSE(MakeHttpConnector(c).ok());
  c.endpoint = "ftp://host/x";
  EXPECT_FALSE(MakeHttpConnector(c).ok());
  c.endpoint = "https://host.example";
  EXPECT_TRUE(MakeHttpConnector(c).ok());
}

TEST(HttpConnectorTest, ConfigFromEnvironment) {
  unsetenv("DPKPS_GEN_ENDPOINT");
  EXPECT_FALSE(HttpConnectorConfigFromEnv().ok());
  setenv("DPKPS_GEN_ENDPOINT", "http://h/p", 1);
  setenv("DPKPS_GEN_TOKEN", "tok", 1);
  auto c = HttpConnectorConfigFromEnv();
  ASSERT_TRUE(c.ok());
  EXPECT_EQ(c->endpoint, "http://h/p");
  EXPECT_EQ(c->token, "tok");
  EXPECT_EQ(c->max_tokens, 1024);
  EXPECT_EQ(c->temperature, 1.0);
  unsetenv("DPKPS_GEN_ENDPOINT");
  unsetenv("DPKPS_GEN_TOKEN");
}

TEST(FilesTest, FewShotAndSyntheticCorpus) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "dpkps_few_shot.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"text":"Patient stable.","terms":["stable"]})" << "\n\n"
        << R"({"text":"Fever noted.","terms":["fever","noted"]})" << "\n";
  }
  auto ex = LoadFewShot(path);
  ASSERT_TRUE(ex.ok()) << ex.status();
  ASSERT_EQ(ex->size(), 2u);
  EXPECT_EQ((*ex)[1].terms, (std::vector<std::string>{"fever", "noted"}));
  {
    std::ofstream out(path);
    out << R"({"text":"x"})" << "\n";
  }
  EXPECT_FALSE(LoadFewShot(path).ok());
  std::remove(path.c_str());
  EXPECT_FALSE(LoadFewShot(path).ok());

  const std::vector<SyntheticDocument> docs = {
      {"hello", "pos", Seq({"a", "b"}, "pos"), "mock:1"}};
  std::ostringstream out;
  WriteSyntheticCorpus(docs, out);
  const nlohmann::json j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["text"], "hello");
  EXPECT_EQ(j["label"], "pos");
  EXPECT_EQ(j["terms"], (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(j["generator_id"], "mock:1");
}

}  // namespace
}  // namespace dpkps
