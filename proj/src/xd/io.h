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

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "xd/error.h"

namespace xd::io {

// Little-endian primitive serialization. Bytes are assembled explicitly so
// files are identical across hosts regardless of native byte order.

inline void put_u32(std::ostream& os, uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, uint64_t x) {
  put_u32(os, static_cast<uint32_t>(x));
  put_u32(os, static_cast<uint32_t>(x >> 32));
}

inline void put_f32(std::ostream& os, float x) {
  uint32_t u;
  std::memcpy(&u, &x, 4);
  put_u32(os, u);
}

inline void put_f64(std::ostream& os, double x) {
  uint64_t u;
  std::memcpy(&u, &x, 8);
  put_u64(os, u);
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ConfigError("truncated file while reading u32");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t get_u64(std::istream& is) {
  uint64_t lo = get_u32(is);
  uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

inline float get_f32(std::istream& is) {
  uint32_t u = get_u32(is);
  float x;
  std::memcpy(&x, &u, 4);
  return x;
}

inline double get_f64(std::istream& is) {
  uint64_t u = get_u64(is);
  double x;
  std::memcpy(&x, &u, 8);
  return x;
}

inline std::string get_str(std::istream& is) {
  uint32_t n = get_u32(is);
  if (n > (1u << 24)) throw ConfigError("implausible string length in file");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw ConfigError("truncated file while reading string");
  return s;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open for reading: " + path);
  return is;
}

}  // namespace xd::io
