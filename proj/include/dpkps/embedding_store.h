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

#ifndef DPKPS_EMBEDDING_STORE_H_
#define DPKPS_EMBEDDING_STORE_H_

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/container/flat_hash_map.h"
#include "absl/status/statusor.h"

namespace dpkps {

// Public term embeddings, every row scaled to unit Euclidean norm. Rows are
// stored contiguously; a term's row index is its position in load order.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  // Builds a table from raw (term, vector) pairs. Terms go through the
  // vocabulary normalizer; zero vectors and wrong dimensions are errors.
  // Later duplicates of a term are ignored.
  static absl::StatusOr<EmbeddingTable> Create(
      int dim, std::vector<std::pair<std::string, std::vector<double>>> rows);

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(terms_.size()); }
  const std::string& term(int row) const { return terms_[row]; }

  std::optional<int> Find(std::string_view term) const;
  bool Contains(std::string_view term) const { return Find(term).has_value(); }

  std::span<const double> Row(int row) const {
    return {data_.data() + static_cast<size_t>(row) * dim_,
            static_cast<size_t>(dim_)};
  }
  // Vector for `term`; NotFound names the term.
  absl::StatusOr<std::span<const double>> Vector(std::string_view term) const;

 private:
  int dim_ = 0;
  std::vector<std::string> terms_;
  std::vector<double> data_;
  absl::flat_hash_map<std::string, int> index_;
};

// Whitespace text format: `term v1 ... vd` per line, with '_' standing for a
// space inside multi-word terms. An `expected_dim` <= 0 takes the dimension
// from the first line.
absl::StatusOr<EmbeddingTable> ParseEmbeddings(std::istream& in,
                                               int expected_dim);
absl::StatusOr<EmbeddingTable> LoadEmbeddings(const std::string& path,
                                              int expected_dim);
// Writes the (already normalized) rows for `terms` in the same format.
absl::Status WriteEmbeddings(const EmbeddingTable& table,
                             std::span<const std::string> terms,
                             std::ostream& out);

// A concatenation of `blocks` d-dimensional blocks. The first `filled`
// blocks have squared norm `block_sq_norm`; the rest are zero padding.
struct BlockVector {
  std::vector<double> data;
  int block_dim = 0;
  int blocks = 0;
  int filled = 0;
  double block_sq_norm = 0;
};

// Concatenates the embeddings of `terms`, each scaled to squared norm `u`,
// then appends zero blocks up to `pad_to` blocks.
absl::StatusOr<BlockVector> EmbedPrefix(std::span<const std::string> terms,
                                        const EmbeddingTable& table, double u,
                                        int pad_to);

}  // namespace dpkps

#endif  // DPKPS_EMBEDDING_STORE_H_
