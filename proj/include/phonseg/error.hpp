// Copyright 2026 The phonseg Authors
// SPDX-License-Identifier: Apache-2.0
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

#pragma once

#include <stdexcept>
#include <string>

namespace phonseg {

/// Base of every error the library throws. `kind()` is a stable short code
/// used by the CLI for machine-readable error reports.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define PHONSEG_DEFINE_ERROR(Name, code)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(code, message) {}   \
  }

PHONSEG_DEFINE_ERROR(DimensionError, "dimension");
PHONSEG_DEFINE_ERROR(TrainingError, "training");
PHONSEG_DEFINE_ERROR(IoError, "io");
PHONSEG_DEFINE_ERROR(SpecError, "spec");
PHONSEG_DEFINE_ERROR(G2PError, "g2p");
PHONSEG_DEFINE_ERROR(DataError, "data");
PHONSEG_DEFINE_ERROR(InfeasibleTargetError, "infeasible_target");
PHONSEG_DEFINE_ERROR(OracleSizeError, "oracle_size");
PHONSEG_DEFINE_ERROR(ConfigError, "config");
PHONSEG_DEFINE_ERROR(UndefinedRateError, "undefined_rate");
PHONSEG_DEFINE_ERROR(AnalysisError, "analysis");
PHONSEG_DEFINE_ERROR(ComparisonError, "comparison");
PHONSEG_DEFINE_ERROR(AuditError, "audit");

#undef PHONSEG_DEFINE_ERROR

}  // namespace phonseg
