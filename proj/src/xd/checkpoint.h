// Copyright 2026 xdistill authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <string>

#include "xd/params.h"

namespace xd::diff {

// Checkpoint container: named f64 arrays in name order plus identifying
// metadata. `kind` says what the parameters are (e.g. "teacher",
// "student_offline"); `config_hash` and `seed` stamp provenance so stale
// artifacts are refused on resume.
struct CheckpointMeta {
  std::string kind;
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  std::map<std::string, std::string> extra;
};

void save_checkpoint(const std::string& path, const ParamStore& ps, const CheckpointMeta& meta);

// Loads params into an empty store (throws if the store already has any of
// the names). Returns the stored metadata.
CheckpointMeta load_checkpoint(const std::string& path, ParamStore& ps);

// Reads only the metadata header; cheap existence/provenance check.
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace xd::diff
