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

#include "dpkps/privacy_accountant.h"

#include <cmath>
#include <limits>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "json.hpp"

namespace dpkps {
namespace {

using nlohmann::json;

json EntryToJson(const LedgerEntry& e) {
  return json{{"mechanism", e.mechanism},
              {"epsilon", e.epsilon.ToString()},
              {"epsilon_micros", e.epsilon.micros()},
              {"sequence", e.sequence},
              {"parallel_partitions", e.parallel_partitions}};
}

}  // namespace

absl::StatusOr<Epsilon> Epsilon::FromDouble(double value) {
  if (!std::isfinite(value) || value <= 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("epsilon must be finite and > 0, got ", value));
  }
  const double micros = std::round(value * kMicrosPerUnit);
  if (micros < 1) {
    return absl::InvalidArgumentError(
        absl::StrCat("epsilon ", value, " is below one micro-epsilon"));
  }
  if (micros > static_cast<double>(std::numeric_limits<int64_t>::max() / 4)) {
    return absl::InvalidArgumentError(absl::StrCat("epsilon ", value,
                                                   " is too large"));
  }
  return Epsilon(static_cast<int64_t>(micros));
}

std::string Epsilon::ToString() const {
  std::string out = absl::StrCat(micros_ / kMicrosPerUnit);
  int64_t frac = micros_ % kMicrosPerUnit;
  if (frac != 0) {
    std::string digits = absl::StrFormat("%06d", frac);
    while (digits.back() == '0') digits.pop_back();
    absl::StrAppend(&out, ".", digits);
  }
  return out;
}

std::vector<Epsilon> Epsilon::Split(int parts) const {
  std::vector<Epsilon> out;
  if (parts < 1) return out;
  const int64_t base = micros_ / parts;
  const int64_t extra = micros_ % parts;
  for (int i = 0; i < parts; ++i) {
    out.push_back(Epsilon(base + (i < extra ? 1 : 0)));
  }
  return out;
}

absl::Status BudgetLedger::Charge(std::string mechanism, Epsilon epsilon,
                                  std::vector<std::string> parallel_partitions) {
  if (epsilon.micros() <= 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("charge for ", mechanism, " must be > 0"));
  }
  const Epsilon after = total() + epsilon;
  if (cap_.has_value() && after > *cap_) {
    return absl::ResourceExhaustedError(absl::StrCat(
        "charging ", epsilon.ToString(), " for ", mechanism,
        " would raise the total to ", after.ToString(), ", above the cap of ",
        cap_->ToString()));
  }
  entries_.push_back(LedgerEntry{
      .mechanism = std::move(mechanism),
      .epsilon = epsilon,
      .sequence = static_cast<int64_t>(entries_.size()),
      .parallel_partitions = std::move(parallel_partitions)});
  return absl::OkStatus();
}

Epsilon BudgetLedger::total() const {
  Epsilon sum;
  for (const LedgerEntry& e : entries_) sum += e.epsilon;
  return sum;
}

std::string BudgetLedger::ToJson() const {
  json entries = json::array();
  for (const LedgerEntry& e : entries_) entries.push_back(EntryToJson(e));
  json out = {{"format", "dpkps.budget.v1"},
              {"entries", std::move(entries)},
              {"total", total().ToString()},
              {"total_micros", total().micros()}};
  out["cap_micros"] = cap_.has_value() ? json(cap_->micros()) : json(nullptr);
  return out.dump(2) + "\n";
}

absl::StatusOr<BudgetLedger> BudgetLedger::FromJson(const std::string& text) {
  json in = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (in.is_discarded() || !in.is_object()) {
    return absl::InvalidArgumentError("ledger is not a JSON object");
  }
  BudgetLedger ledger;
  try {
    if (!in.at("cap_micros").is_null()) {
      ledger.cap_ = Epsilon::FromMicros(in.at("cap_micros").get<int64_t>());
    }
    for (const json& e : in.at("entries")) {
      absl::Status s = ledger.Charge(
          e.at("mechanism").get<std::string>(),
          Epsilon::FromMicros(e.at("epsilon_micros").get<int64_t>()),
          e.at("parallel_partitions").get<std::vector<std::string>>());
      if (!s.ok()) return s;
    }
    if (ledger.total().micros() != in.at("total_micros").get<int64_t>()) {
      return absl::DataLossError(
          "ledger total does not match the sum of its entries");
    }
  } catch (const json::exception& e) {
    return absl::InvalidArgumentError(
        absl::StrCat("malformed ledger: ", e.what()));
  }
  return ledger;
}

AuditReport Audit(const BudgetLedger& ledger) {
  AuditReport report;
  report.total = ledger.total();
  std::string& text = report.text;
  absl::StrAppend(&text, "privacy budget audit (pure epsilon-DP)\n");
  for (const LedgerEntry& e : ledger.entries()) {
    absl::StrAppendFormat(&text, "  [%d] %-40s eps=%s", e.sequence,
                          e.mechanism, e.epsilon.ToString());
    if (!e.parallel_partitions.empty()) {
      absl::StrAppend(&text, "  (parallel over: ",
                      absl::StrJoin(e.parallel_partitions, ", "), ")");
    }
    absl::StrAppend(&text, "\n");
  }
  absl::StrAppend(&text, "  total eps=", report.total.ToString());
  if (ledger.cap().has_value()) {
    absl::StrAppend(&text, " (cap ", ledger.cap()->ToString(), ")");
  }
  absl::StrAppend(&text, "\n");

  json entries = json::array();
  for (const LedgerEntry& e : ledger.entries()) {
    entries.push_back(EntryToJson(e));
  }
  report.json = json{{"entries", std::move(entries)},
                     {"total", report.total.ToString()},
                     {"total_micros", report.total.micros()}}
                    .dump(2);
  return report;
}

}  // namespace dpkps
