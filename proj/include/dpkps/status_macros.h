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

#ifndef DPKPS_STATUS_MACROS_H_
#define DPKPS_STATUS_MACROS_H_

#include "absl/status/status.h"
#include "absl/status/statusor.h"

#define DPKPS_STATUS_CONCAT_INNER_(a, b) a##b
#define DPKPS_STATUS_CONCAT_(a, b) DPKPS_STATUS_CONCAT_INNER_(a, b)

#define DPKPS_RETURN_IF_ERROR(expr)              \
  do {                                           \
    const absl::Status _dpkps_status = (expr);   \
    if (!_dpkps_status.ok()) return _dpkps_status; \
  } while (0)

#define DPKPS_ASSIGN_OR_RETURN_IMPL_(tmp, lhs, rexpr) \
  auto tmp = (rexpr);                                 \
  if (!tmp.ok()) return tmp.status();                 \
  lhs = std::move(tmp).value()

#define DPKPS_ASSIGN_OR_RETURN(lhs, rexpr) \
  DPKPS_ASSIGN_OR_RETURN_IMPL_(            \
      DPKPS_STATUS_CONCAT_(_dpkps_statusor_, __LINE__), lhs, rexpr)

#endif  // DPKPS_STATUS_MACROS_H_
