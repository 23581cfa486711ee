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

#include <filesystem>
#include <string>
#include <vector>

namespace phonseg::io {

namespace fs = std::filesystem;

// Every file read in the library goes through read_bytes so that stage
// runners can restrict and record which paths a stage touches.
std::string read_bytes(const fs::path& path);
std::string read_text(const fs::path& path);
void write_bytes(const fs::path& path, const std::string& bytes);
inline void write_text(const fs::path& path, const std::string& text) { write_bytes(path, text); }

/// RAII scope that confines reads to the given roots. Nested scopes replace
/// the outer one until destroyed. A read outside the roots throws AuditError.
class ReadAudit {
 public:
  explicit ReadAudit(std::vector<fs::path> allowed_roots);
  ~ReadAudit();
  ReadAudit(const ReadAudit&) = delete;
  ReadAudit& operator=(const ReadAudit&) = delete;

  const std::vector<fs::path>& reads() const { return reads_; }
  const std::vector<fs::path>& allowed_roots() const { return roots_; }

  void record(const fs::path& canonical);

 private:
  std::vector<fs::path> roots_;
  std::vector<fs::path> reads_;
  ReadAudit* previous_;
};

bool path_within(const fs::path& path, const fs::path& root);

/// Round-trippable decimal text for CSV cells (%.17g).
std::string format_double(double v);

}  // namespace phonseg::io
