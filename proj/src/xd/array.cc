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

#include "xd/array.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace xd::diff {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

Array::Array(std::vector<int> s, double fill)
    : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), fill) {}

Array Array::scalar(double x) {
  Array a({1});
  a.v[0] = x;
  return a;
}

Array Array::from(std::vector<int> s, std::vector<double> data) {
  if (shape_numel(s) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("Array::from: shape/data size mismatch");
  Array a;
  a.shape = std::move(s);
  a.v = std::move(data);
  return a;
}

bool Array::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Array::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

void add_into(Array& y, const Array& a) {
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += a.v[i];
}

void axpy_into(Array& y, double c, const Array& a) {
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += c * a.v[i];
}

}  // namespace xd::diff
