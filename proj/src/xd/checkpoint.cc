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

#include "xd/checkpoint.h"

#include <cstdio>
#include <cstring>

#include "xd/error.h"
#include "xd/io.h"

namespace xd::diff {

namespace {

constexpr char kMagic[8] = {'X', 'D', 'P', 'A', 'R', 'A', 'M', 'S'};
constexpr uint32_t kVersion = 1;

CheckpointMeta read_header(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw ConfigError("not a checkpoint file: " + path);
  uint32_t version = io::get_u32(is);
  if (version != kVersion)
    throw ConfigError("unsupported checkpoint version in " + path);
  CheckpointMeta meta;
  meta.config_hash = io::get_u64(is);
  meta.seed = io::get_u64(is);
  meta.kind = io::get_str(is);
  uint32_t nmeta = io::get_u32(is);
  for (uint32_t i = 0; i < nmeta; ++i) {
    std::string k = io::get_str(is);
    meta.extra[k] = io::get_str(is);
  }
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps, const CheckpointMeta& meta) {
  // Write to a temp file then rename, so an interrupted save never leaves
  // a half-written checkpoint that a resumed pipeline would trust.
  std::string tmp = path + ".tmp";
  {
    auto os = io::open_out(tmp);
    os.write(kMagic, 8);
    io::put_u32(os, kVersion);
    io::put_u64(os, meta.config_hash);
    io::put_u64(os, meta.seed);
    io::put_str(os, meta.kind);
    io::put_u32(os, static_cast<uint32_t>(meta.extra.size()));
    for (const auto& [k, v] : meta.extra) {
      io::put_str(os, k);
      io::put_str(os, v);
    }
    io::put_u32(os, static_cast<uint32_t>(ps.size()));
    for (const auto& [name, p] : ps.entries()) {  // map order == name order
      io::put_str(os, name);
      io::put_str(os, p.group);
      io::put_u32(os, static_cast<uint32_t>(p.value.shape.size()));
      for (int d : p.value.shape) io::put_u32(os, static_cast<uint32_t>(d));
      for (double x : p.value.v) io::put_f64(os, x);
    }
    if (!os) throw ConfigError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ConfigError("cannot move checkpoint into place: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore& ps) {
  auto is = io::open_in(path);
  CheckpointMeta meta = read_header(is, path);
  uint32_t count = io::get_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = io::get_str(is);
    std::string group = io::get_str(is);
    uint32_t ndim = io::get_u32(is);
    if (ndim > 8) throw ConfigError("implausible rank in checkpoint: " + path);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(io::get_u32(is));
    Array a(shape);
    for (int64_t j = 0; j < a.numel(); ++j) a.v[j] = io::get_f64(is);
    ps.add(name, std::move(a), group);
  }
  if (!is) throw ConfigError("truncated checkpoint: " + path);
  return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  auto is = io::open_in(path);
  return read_header(is, path);
}

}  // namespace xd::diff
