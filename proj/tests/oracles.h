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

// Independent reference computations used as test oracles. Nothing here calls
// into the library's KDE or sampling code.

#ifndef DPKPS_TESTS_ORACLES_H_
#define DPKPS_TESTS_ORACLES_H_

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dpkps/embedding_store.h"

namespace dpkps::oracle {

inline double SquaredDistance(std::span<const double> a,
                              std::span<const double> b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline double Kernel(std::span<const double> a, std::span<const double> b) {
  return std::exp(-SquaredDistance(a, b));
}

// The first `len` terms of `doc`, repeating from the start when it is shorter.
inline std::vector<std::string> CycledPrefix(const std::vector<std::string>& doc,
                                             int len) {
  std::vector<std::string> out;
  for (int i = 0; i < len; ++i) out.push_back(doc[i % doc.size()]);
  return out;
}

// Prefix kernel between the first len(prefix) blocks of a document and the
// prefix, with every block scaled to squared norm u:
//   exp(-u * sum_b ||e(doc_b) - e(prefix_b)||^2).
inline double PrefixKernel(const std::vector<std::string>& doc,
                           const std::vector<std::string>& prefix,
                           const EmbeddingTable& table, double u) {
  const std::vector<std::string> x = CycledPrefix(doc, prefix.size());
  double s = 0;
  for (size_t b = 0; b < prefix.size(); ++b) {
    s += u * SquaredDistance(*table.Vector(x[b]), *table.Vector(prefix[b]));
  }
  return std::exp(-s);
}

// Exact prefix KDE over documents (each a non-empty term list).
inline double PrefixKde(const std::vector<std::vector<std::string>>& docs,
                        const std::vector<std::string>& prefix,
                        const EmbeddingTable& table, double u) {
  double s = 0;
  for (const auto& doc : docs) s += PrefixKernel(doc, prefix, table, u);
  return s / docs.size();
}

// Bandwidth used for a prefix of length l by each ensemble kind.
inline double LinearU(int l) { return 1.0 / l; }
inline double LogU(int l) {
  if (l == 1) return 1.0;
  int k = 1;
  while (k < l) k *= 2;
  return 2.0 / k;
}

struct PathStep {
  int choice = 0;
  // Best minus second-best exact score at this step.
  double gap = 0;
};

// Enumerates every prefix of length 1..L over `vocab` (|vocab|^l each),
// scores them with `score`, and follows the argmax child from the empty
// prefix. Ties go to the lower vocabulary index.
inline std::vector<PathStep> BruteForceGreedyPath(
    const std::vector<std::string>& vocab, int max_length,
    const std::function<double(const std::vector<std::string>&)>& score) {
  const int n = static_cast<int>(vocab.size());
  // all_scores[l-1][code] for code = base-n digits of the prefix.
  std::vector<std::vector<double>> all_scores(max_length);
  for (int l = 1; l <= max_length; ++l) {
    size_t total = 1;
    for (int i = 0; i < l; ++i) total *= n;
    all_scores[l - 1].resize(total);
    for (size_t code = 0; code < total; ++code) {
      std::vector<std::string> prefix(l);
      size_t c = code;
      for (int i = l - 1; i >= 0; --i) {
        prefix[i] = vocab[c % n];
        c /= n;
      }
      all_scores[l - 1][code] = score(prefix);
    }
  }
  std::vector<PathStep> path;
  size_t parent = 0;
  for (int l = 1; l <= max_length; ++l) {
    int best = 0;
    double best_score = -INFINITY, second = -INFINITY;
    for (int w = 0; w < n; ++w) {
      const double s = all_scores[l - 1][parent * n + w];
      if (s > best_score) {
        second = best_score;
        best_score = s;
        best = w;
      } else if (s > second) {
        second = s;
      }
    }
    path.push_back(PathStep{best, best_score - second});
    parent = parent * n + best;
  }
  return path;
}

}  // namespace dpkps::oracle

#endif  // DPKPS_TESTS_ORACLES_H_
