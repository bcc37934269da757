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

#include "dpkps/embedding_store.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_replace.h"
#include "absl/strings/str_split.h"
#include "dpkps/corpus_io.h"

namespace dpkps {
namespace {

std::string NormalizeTerm(std::string_view term) {
  return absl::StrJoin(Tokenize(term), " ");
}

}  // namespace

absl::StatusOr<EmbeddingTable> EmbeddingTable::Create(
    int dim, std::vector<std::pair<std::string, std::vector<double>>> rows) {
  if (dim < 1) return absl::InvalidArgumentError("dimension must be >= 1");
  EmbeddingTable table;
  table.dim_ = dim;
  table.data_.reserve(rows.size() * dim);
  for (auto& [raw_term, vec] : rows) {
    std::string term = NormalizeTerm(raw_term);
    if (term.empty()) {
      return absl::InvalidArgumentError(
          absl::StrCat("empty term \"", raw_term, "\""));
    }
    if (static_cast<int>(vec.size()) != dim) {
      return absl::InvalidArgumentError(
          absl::StrCat("term \"", term, "\" has ", vec.size(),
                       " components, expected ", dim));
    }
    double sq = 0;
    for (double v : vec) {
      if (!std::isfinite(v)) {
        return absl::InvalidArgumentError(
            absl::StrCat("term \"", term, "\" has a non-finite component"));
      }
      sq += v * v;
    }
    if (sq == 0) {
      return absl::InvalidArgumentError(
          absl::StrCat("term \"", term, "\" has a zero vector"));
    }
    if (!table.index_.try_emplace(term, table.size()).second) continue;
    const double norm = std::sqrt(sq);
    for (double v : vec) table.data_.push_back(v / norm);
    table.terms_.push_back(std::move(term));
  }
  return table;
}

std::optional<int> EmbeddingTable::Find(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

absl::StatusOr<std::span<const double>> EmbeddingTable::Vector(
    std::string_view term) const {
  if (auto row = Find(term)) return Row(*row);
  return absl::NotFoundError(
      absl::StrCat("no embedding for term \"", std::string(term), "\""));
}

absl::StatusOr<EmbeddingTable> ParseEmbeddings(std::istream& in,
                                               int expected_dim) {
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<absl::string_view> fields =
        absl::StrSplit(line, absl::ByAnyChar(" \t\r"), absl::SkipEmpty());
    if (fields.empty()) continue;
    if (expected_dim <= 0) expected_dim = static_cast<int>(fields.size()) - 1;
    if (static_cast<int>(fields.size()) != expected_dim + 1) {
      return absl::InvalidArgumentError(
          absl::StrCat("line ", line_no, ": expected ", expected_dim,
                       " values, found ", fields.size() - 1));
    }
    std::vector<double> vec(expected_dim);
    for (int i = 0; i < expected_dim; ++i) {
      const absl::string_view f = fields[i + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), vec[i]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        return absl::InvalidArgumentError(absl::StrCat(
            "line ", line_no, ": cannot parse \"", f, "\" as a number"));
      }
    }
    std::string term = absl::StrReplaceAll(fields[0], {{"_", " "}});
    // Pure punctuation tokens can never match a normalized vocabulary term.
    if (NormalizeTerm(term).empty()) continue;
    rows.emplace_back(std::move(term), std::move(vec));
  }
  auto table = EmbeddingTable::Create(expected_dim, std::move(rows));
  if (!table.ok()) {
    return absl::InvalidArgumentError(table.status().message());
  }
  return table;
}

absl::StatusOr<EmbeddingTable> LoadEmbeddings(const std::string& path,
                                              int expected_dim) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  return ParseEmbeddings(in, expected_dim);
}

absl::Status WriteEmbeddings(const EmbeddingTable& table,
                             std::span<const std::string> terms,
                             std::ostream& out) {
  out << std::setprecision(17);
  for (const std::string& term : terms) {
    auto vec = table.Vector(term);
    if (!vec.ok()) return vec.status();
    out << absl::StrReplaceAll(term, {{" ", "_"}});
    for (double v : *vec) out << ' ' << v;
    out << '\n';
  }
  return absl::OkStatus();
}

absl::StatusOr<BlockVector> EmbedPrefix(std::span<const std::string> terms,
                                        const EmbeddingTable& table, double u,
                                        int pad_to) {
  if (!(u > 0)) return absl::InvalidArgumentError("block norm u must be > 0");
  if (static_cast<int>(terms.size()) > pad_to) {
    return absl::InvalidArgumentError(absl::StrCat(
        "prefix of ", terms.size(), " terms does not fit ", pad_to, " blocks"));
  }
  const int d = table.dim();
  BlockVector out;
  out.block_dim = d;
  out.blocks = pad_to;
  out.filled = static_cast<int>(terms.size());
  out.block_sq_norm = u;
  out.data.assign(static_cast<size_t>(d) * pad_to, 0.0);
  const double scale = std::sqrt(u);
  for (size_t b = 0; b < terms.size(); ++b) {
    auto vec = table.Vector(terms[b]);
    if (!vec.ok()) return vec.status();
    for (int j = 0; j < d; ++j) out.data[b * d + j] = scale * (*vec)[j];
  }
  return out;
}

}  // namespace dpkps
