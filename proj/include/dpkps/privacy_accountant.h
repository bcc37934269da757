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

#ifndef DPKPS_PRIVACY_ACCOUNTANT_H_
#define DPKPS_PRIVACY_ACCOUNTANT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpkps/epsilon.h"

namespace dpkps {

struct LedgerEntry {
  std::string mechanism;
  Epsilon epsilon;
  // Logical clock: position in the charge order. Wall-clock time would make
  // ledgers of identical runs differ.
  int64_t sequence = 0;
  // Non-empty when the mechanism ran once per disjoint partition (one sketch
  // per class label); the charge is then the per-partition cost, paid once.
  std::vector<std::string> parallel_partitions;
};

// Sequential pure-DP composition: the total is the sum of entries.
class BudgetLedger {
 public:
  BudgetLedger() = default;
  explicit BudgetLedger(std::optional<Epsilon> cap) : cap_(cap) {}

  // Records a charge before the mechanism runs. Fails, leaving the ledger
  // unchanged, if epsilon is not positive or the cap would be exceeded.
  absl::Status Charge(std::string mechanism, Epsilon epsilon,
                      std::vector<std::string> parallel_partitions = {});

  Epsilon total() const;
  std::optional<Epsilon> cap() const { return cap_; }
  const std::vector<LedgerEntry>& entries() const { return entries_; }

  std::string ToJson() const;
  static absl::StatusOr<BudgetLedger> FromJson(const std::string& text);

 private:
  std::vector<LedgerEntry> entries_;
  std::optional<Epsilon> cap_;
};

struct AuditReport {
  std::string text;
  std::string json;
  Epsilon total;
};

AuditReport Audit(const BudgetLedger& ledger);

}  // namespace dpkps

#endif  // DPKPS_PRIVACY_ACCOUNTANT_H_
