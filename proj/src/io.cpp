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

#include "phonseg/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "phonseg/error.hpp"

namespace phonseg::io {

namespace {
thread_local ReadAudit* g_audit = nullptr;

fs::path normalized(const fs::path& p) {
  std::error_code ec;
  auto abs = fs::weakly_canonical(fs::absolute(p), ec);
  return ec ? fs::absolute(p).lexically_normal() : abs;
}
}  // namespace

bool path_within(const fs::path& path, const fs::path& root) {
  const auto p = normalized(path);
  const auto r = normalized(root);
  auto pit = p.begin();
  for (auto rit = r.begin(); rit != r.end(); ++rit, ++pit) {
    if (rit->empty()) continue;
    if (pit == p.end() || *pit != *rit) return false;
  }
  return true;
}

ReadAudit::ReadAudit(std::vector<fs::path> allowed_roots)
    : roots_(std::move(allowed_roots)), previous_(g_audit) {
  for (auto& r : roots_) r = normalized(r);
  g_audit = this;
}

ReadAudit::~ReadAudit() { g_audit = previous_; }

void ReadAudit::record(const fs::path& canonical) {
  bool ok = false;
  for (const auto& r : roots_) {
    if (path_within(canonical, r)) {
      ok = true;
      break;
    }
  }
  if (!ok) throw AuditError("read outside declared stage inputs: " + canonical.string());
  reads_.push_back(canonical);
}

std::string read_bytes(const fs::path& path) {
  if (g_audit != nullptr) g_audit->record(normalized(path));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string read_text(const fs::path& path) { return read_bytes(path); }

void write_bytes(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace phonseg::io
