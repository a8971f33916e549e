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
#include <string>
#include <vector>

namespace xd::diff {

// Dense row-major tensor of doubles. Everything the models compute with.
struct Array {
  std::vector<int> shape;
  std::vector<double> v;

  Array() = default;
  explicit Array(std::vector<int> s, double fill = 0.0);

  static Array scalar(double x);
  static Array from(std::vector<int> s, std::vector<double> data);

  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(v.size()); }

  double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  // 2-D accessors (rows x cols).
  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Array& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

// y += a
void add_into(Array& y, const Array& a);
// y += c * a
void axpy_into(Array& y, double c, const Array& a);

int64_t shape_numel(const std::vector<int>& shape);

// Boolean attention mask over (rows x cols); m[i*cols + j] != 0 means
// position i may attend to position j.
struct AttnMask {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> m;

  AttnMask() = default;
  AttnMask(int r, int c, bool fill = false)
      : rows(r), cols(c), m(static_cast<size_t>(r) * c, fill ? 1 : 0) {}

  bool at(int i, int j) const { return m[static_cast<size_t>(i) * cols + j] != 0; }
  void set(int i, int j, bool val) { m[static_cast<size_t>(i) * cols + j] = val ? 1 : 0; }

  static AttnMask full(int n) { return AttnMask(n, n, true); }
  static AttnMask identity(int n) {
    AttnMask a(n, n, false);
    for (int i = 0; i < n; ++i) a.set(i, i, true);
    return a;
  }
  static AttnMask causal(int n) {
    AttnMask a(n, n, false);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) a.set(i, j, true);
    return a;
  }
};

}  // namespace xd::diff

// The containers are used by every layer of the project; lift them (and
// the in-place helpers) to the top-level namespace.
namespace xd {
using diff::add_into;
using diff::Array;
using diff::AttnMask;
using diff::axpy_into;
using diff::shape_numel;
}  // namespace xd
