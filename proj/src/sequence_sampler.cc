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

#include "dpkps/sequence_sampler.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "dpkps/status_macros.h"
#include "glog/logging.h"
#include "json.hpp"

namespace dpkps {
namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

// Indices of candidates ordered by descending score, ties by ascending id.
std::vector<int> RankCandidates(std::span<const double> scores,
                                const CandidateSet& candidates, int keep) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  keep = std::min<int>(keep, static_cast<int>(order.size()));
  std::partial_sort(order.begin(), order.begin() + keep, order.end(),
                    [&](int a, int b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return candidates.id(a) < candidates.id(b);
                    });
  order.resize(keep);
  return order;
}

absl::StatusOr<int> Select(std::span<const double> scores,
                           const CandidateSet& candidates,
                           const SelectionStrategy& strategy, Rng& rng) {
  switch (strategy.kind) {
    case StrategyKind::kGreedy:
      return RankCandidates(scores, candidates, 1).front();
    case StrategyKind::kMultinomial: {
      DPKPS_ASSIGN_OR_RETURN(ScoreVector dist,
                             ScoresToSamplingDistribution(scores));
      return SampleIndex(dist, rng);
    }
    case StrategyKind::kTopK: {
      const std::vector<int> top =
          RankCandidates(scores, candidates, strategy.top_k);
      std::vector<double> sub;
      sub.reserve(top.size());
      for (int i : top) sub.push_back(scores[i]);
      DPKPS_ASSIGN_OR_RETURN(ScoreVector dist,
                             ScoresToSamplingDistribution(sub));
      return top[SampleIndex(dist, rng)];
    }
  }
  return absl::InternalError("unreachable");
}

// Runs fn(i) for i in [0, count) over `threads` workers with fixed
// contiguous chunks; the first error wins.
absl::Status ParallelFor(int count, int threads,
                         const std::function<absl::Status(int)>& fn) {
  threads = std::clamp(threads, 1, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) DPKPS_RETURN_IF_ERROR(fn(i));
    return absl::OkStatus();
  }
  std::vector<absl::Status> status(threads);
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> workers;
    const int chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        const int end = std::min(count, (t + 1) * chunk);
        for (int i = t * chunk; i < end && !failed.load(); ++i) {
          absl::Status s = fn(i);
          if (!s.ok()) {
            status[t] = s;
            failed.store(true);
            return;
          }
        }
      });
    }
  }
  for (const absl::Status& s : status) DPKPS_RETURN_IF_ERROR(s);
  return absl::OkStatus();
}

std::string SamplerTag(std::string_view mode, const SelectionStrategy& s) {
  return absl::StrCat(std::string(mode), "/", s.ToString());
}

}  // namespace

absl::StatusOr<ScoreVector> ScoreToDistribution(std::span<const double> raw,
                                                double floor) {
  if (raw.empty()) return absl::InvalidArgumentError("no scores");
  if (!(floor > 0) || !std::isfinite(floor)) {
    return absl::InvalidArgumentError("floor must be finite and > 0");
  }
  ScoreVector out;
  out.probs.resize(raw.size());
  bool any_finite = false;
  double sum = 0;
  for (size_t i = 0; i < raw.size(); ++i) {
    const bool finite = std::isfinite(raw[i]);
    any_finite |= finite;
    out.probs[i] = finite ? std::max(raw[i], floor) : floor;
    sum += out.probs[i];
  }
  if (!any_finite) return absl::InvalidArgumentError("all scores non-finite");
  for (double& p : out.probs) p /= sum;
  return out;
}

absl::StatusOr<ScoreVector> ScoresToSamplingDistribution(
    std::span<const double> raw) {
  double max_score = -std::numeric_limits<double>::infinity();
  for (double s : raw) {
    if (std::isfinite(s)) max_score = std::max(max_score, s);
  }
  const double floor = max_score > 0 ? kRelativeScoreFloor * max_score : 1.0;
  return ScoreToDistribution(raw, floor);
}

int SampleIndex(const ScoreVector& dist, Rng& rng) {
  const double u = rng.Uniform();
  double cumulative = 0;
  for (size_t i = 0; i < dist.probs.size(); ++i) {
    cumulative += dist.probs[i];
    if (u < cumulative) return static_cast<int>(i);
  }
  // Rounding left a sliver above the final cumulative sum.
  for (size_t i = dist.probs.size(); i-- > 0;) {
    if (dist.probs[i] > 0) return static_cast<int>(i);
  }
  return 0;
}

absl::StatusOr<SelectionStrategy> SelectionStrategy::Parse(
    std::string_view text) {
  SelectionStrategy s;
  if (text == "greedy") {
    s.kind = StrategyKind::kGreedy;
  } else if (text == "multinomial") {
    s.kind = StrategyKind::kMultinomial;
  } else if (text == "topk") {
    s.kind = StrategyKind::kTopK;
  } else if (text.starts_with("topk:")) {
    s.kind = StrategyKind::kTopK;
    std::string_view k = text.substr(5);
    auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), s.top_k);
    if (ec != std::errc() || ptr != k.data() + k.size() || s.top_k < 1) {
      return absl::InvalidArgumentError(
          absl::StrCat("bad top-k strategy \"", std::string(text), "\""));
    }
  } else {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown strategy \"", std::string(text), "\""));
  }
  return s;
}

std::string SelectionStrategy::ToString() const {
  switch (kind) {
    case StrategyKind::kGreedy:
      return "greedy";
    case StrategyKind::kMultinomial:
      return "multinomial";
    case StrategyKind::kTopK:
      return absl::StrCat("topk:", top_k);
  }
  return "unknown";
}

void WriteSequences(std::span<const KeyphraseSequence> sequences,
                    std::ostream& out) {
  for (const KeyphraseSequence& seq : sequences) {
    out << nlohmann::json{{"label", seq.label},
                          {"terms", seq.terms},
                          {"seed", seq.seed},
                          {"sampler", seq.sampler}}
               .dump()
        << '\n';
  }
}

absl::StatusOr<std::vector<KeyphraseSequence>> ParseSequences(
    std::istream& in) {
  using nlohmann::json;
  std::vector<KeyphraseSequence> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": not a JSON object"));
    }
    KeyphraseSequence seq;
    try {
      seq.label = obj.at("label").get<std::string>();
      seq.terms = obj.at("terms").get<std::vector<std::string>>();
      seq.seed = obj.at("seed").get<uint64_t>();
      seq.sampler = obj.value("sampler", "");
    } catch (const json::exception& e) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": ", e.what()));
    }
    if (seq.sampler.empty()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "line ", line_no, ": sequence has no sampler provenance"));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

absl::StatusOr<std::vector<KeyphraseSequence>> LoadSequences(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  return ParseSequences(in);
}

absl::StatusOr<CandidateSet> CandidateSet::Create(
    const PrivatizedVocabulary& vocab, const EmbeddingTable& table) {
  CandidateSet set;
  std::vector<int> rows;
  for (int i = 0; i < vocab.size(); ++i) {
    auto row = table.Find(vocab.terms[i]);
    if (!row.has_value()) {
      ++set.dropped_;
      continue;
    }
    rows.push_back(*row);
    set.terms_.push_back(vocab.terms[i]);
    set.ids_.push_back(vocab.term_ids[i]);
  }
  if (set.dropped_ > 0) {
    LOG(WARNING) << "dropped " << set.dropped_
                 << " privatized terms without embeddings";
  }
  if (rows.empty()) {
    return absl::FailedPreconditionError(
        "no privatized term has an embedding");
  }
  set.embeddings_.resize(static_cast<Eigen::Index>(rows.size()), table.dim());
  for (size_t r = 0; r < rows.size(); ++r) {
    std::span<const double> v = table.Row(rows[r]);
    for (int j = 0; j < table.dim(); ++j) set.embeddings_(r, j) = v[j];
  }
  return set;
}

absl::StatusOr<PrefixScorer> PrefixScorer::Create(
    const KdeEnsemble& ensemble, const CandidateSet& candidates) {
  const int d = static_cast<int>(candidates.embeddings().cols());
  const int max_len = ensemble.kind() == EnsembleKind::kIndependent
                          ? 1
                          : ensemble.max_length();
  PrefixScorer scorer;
  scorer.ensemble_ = &ensemble;
  scorer.candidates_ = &candidates;
  for (int len = 1; len <= max_len; ++len) {
    DPKPS_ASSIGN_OR_RETURN(int index, ensemble.Route(len));
    const DpKdeSketch& sketch = ensemble.sketches()[index];
    const BlockGeometry& g = sketch.geometry();
    if (g.block_dim != d) {
      return absl::InvalidArgumentError(absl::StrCat(
          "sketch block dimension ", g.block_dim, " != embedding dimension ",
          d));
    }
    Step step;
    step.sketch = index;
    step.sqrt_u = std::sqrt(g.block_sq_norm);
    step.blowup = std::exp(g.block_sq_norm * (g.num_blocks - len));
    step.candidate_phase =
        candidates.embeddings() *
        sketch.features().omegas().middleCols((len - 1) * d, d).transpose();
    scorer.steps_.push_back(std::move(step));
  }
  return scorer;
}

absl::StatusOr<std::vector<double>> PrefixScorer::ScoreExtensions(
    std::span<const int> prefix) const {
  const int len = static_cast<int>(prefix.size()) + 1;
  if (len > max_length()) {
    return absl::OutOfRangeError(absl::StrCat(
        "prefix of length ", len, " exceeds L=", max_length()));
  }
  const Step& step = steps_[len - 1];
  const DpKdeSketch& sketch = ensemble_->sketches()[step.sketch];
  const RowMatrix& omegas = sketch.features().omegas();
  const Eigen::VectorXd& betas = sketch.features().betas();
  const Eigen::VectorXd& means = sketch.noisy_means();
  const RowMatrix& emb = candidates_->embeddings();
  const int d = static_cast<int>(emb.cols());
  const int num_features = sketch.num_features();

  Eigen::VectorXd prefix_phase = Eigen::VectorXd::Zero(num_features);
  for (int j = 0; j < len - 1; ++j) {
    if (prefix[j] < 0 || prefix[j] >= candidates_->size()) {
      return absl::OutOfRangeError("prefix holds an unknown candidate");
    }
    prefix_phase +=
        omegas.middleCols(j * d, d) * emb.row(prefix[j]).transpose();
  }

  const double phase_scale = kSqrt2 * step.sqrt_u;
  const double out_scale = step.blowup * kSqrt2 / num_features;
  std::vector<double> scores(candidates_->size());
  for (int w = 0; w < candidates_->size(); ++w) {
    const double* cand = step.candidate_phase.row(w).data();
    double sum = 0;
    for (int i = 0; i < num_features; ++i) {
      sum += means(i) *
             std::cos(phase_scale * (prefix_phase(i) + cand[i]) + betas(i));
    }
    scores[w] = out_scale * sum;
  }
  return scores;
}

absl::StatusOr<SampleResult> SampleIndependent(const DpKdeSketch& sketch,
                                               const CandidateSet& candidates,
                                               const SamplerOptions& options) {
  if (candidates.size() == 0) {
    return absl::InvalidArgumentError("empty candidate vocabulary");
  }
  if (options.length < 1 || options.count < 0) {
    return absl::InvalidArgumentError("need L >= 1 and count >= 0");
  }
  if (sketch.geometry().num_blocks != 1) {
    return absl::InvalidArgumentError(
        "independent sampling needs a single-block (k=1) sketch");
  }
  SampleResult result;
  std::vector<double> scores(candidates.size());
  for (int v = 0; v < candidates.size(); ++v) {
    const RowMatrix& emb = candidates.embeddings();
    std::span<const double> row(emb.row(v).data(), emb.cols());
    std::vector<double> y(row.begin(), row.end());
    const double scale = std::sqrt(sketch.geometry().block_sq_norm);
    for (double& x : y) x *= scale;
    DPKPS_ASSIGN_OR_RETURN(KdeEstimate est, Query(sketch, y));
    scores[v] = est.value;
  }
  result.kde_queries = candidates.size();
  DPKPS_ASSIGN_OR_RETURN(ScoreVector dist,
                         ScoresToSamplingDistribution(scores));

  result.sequences.resize(options.count);
  const std::string tag = "independent";
  for (int s = 0; s < options.count; ++s) {
    KeyphraseSequence& seq = result.sequences[s];
    seq.seed = DeriveSeed(options.seed, s);
    seq.label = options.label;
    seq.sampler = tag;
    Rng rng(seq.seed);
    for (int i = 0; i < options.length; ++i) {
      seq.terms.push_back(candidates.term(SampleIndex(dist, rng)));
    }
  }
  return result;
}

absl::StatusOr<SampleResult> SampleIterative(const KdeEnsemble& ensemble,
                                             const CandidateSet& candidates,
                                             const SamplerOptions& options) {
  if (candidates.size() == 0) {
    return absl::InvalidArgumentError("empty candidate vocabulary");
  }
  if (options.length < 1 || options.count < 0) {
    return absl::InvalidArgumentError("need L >= 1 and count >= 0");
  }
  DPKPS_ASSIGN_OR_RETURN(PrefixScorer scorer,
                         PrefixScorer::Create(ensemble, candidates));
  if (options.length > scorer.max_length()) {
    return absl::InvalidArgumentError(
        absl::StrCat("ensemble covers prefixes up to ", scorer.max_length(),
                     ", requested L=", options.length));
  }

  SampleResult result;
  result.sequences.resize(options.count);
  const std::string tag = SamplerTag("iterative", options.strategy);
  absl::Status status = ParallelFor(
      options.count, options.num_threads, [&](int s) -> absl::Status {
        KeyphraseSequence& seq = result.sequences[s];
        seq.seed = DeriveSeed(options.seed, s);
        seq.label = options.label;
        seq.sampler = tag;
        Rng rng(seq.seed);
        std::vector<int> prefix;
        for (int i = 0; i < options.length; ++i) {
          DPKPS_ASSIGN_OR_RETURN(std::vector<double> scores,
                                 scorer.ScoreExtensions(prefix));
          DPKPS_ASSIGN_OR_RETURN(
              int pick, Select(scores, candidates, options.strategy, rng));
          prefix.push_back(pick);
          seq.terms.push_back(candidates.term(pick));
        }
        return absl::OkStatus();
      });
  DPKPS_RETURN_IF_ERROR(status);
  result.kde_queries = static_cast<int64_t>(options.count) * options.length *
                       candidates.size();
  return result;
}

}  // namespace dpkps
