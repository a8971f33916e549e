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

#include "xd/params.h"

#include <cmath>
#include <stdexcept>

#include "xd/error.h"

namespace xd::diff {

Array& ParamStore::add(const std::string& name, Array value, const std::string& group) {
  if (params_.count(name)) throw ConfigError("duplicate parameter: " + name);
  Param p;
  p.grad = Array(value.shape);
  p.value = std::move(value);
  p.group = group;
  auto [it, ok] = params_.emplace(name, std::move(p));
  (void)ok;
  return it->second.value;
}

Array& ParamStore::add_randn(const std::string& name, std::vector<int> shape, double stddev,
                             uint64_t seed, const std::string& group) {
  // Hash the name into the seed so each parameter gets its own stream.
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ull;
  }
  Rng rng(Rng::mix(seed, h));
  Array a(std::move(shape));
  for (auto& x : a.v) x = stddev * rng.normal();
  return add(name, std::move(a), group);
}

const Array& ParamStore::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.value;
}

Array& ParamStore::value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.value;
}

Array& ParamStore::grad(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.grad;
}

const std::string& ParamStore::group_of(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.group;
}

void ParamStore::freeze_all() {
  for (const auto& [name, p] : params_) frozen_.insert(p.group);
}

bool ParamStore::is_frozen(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return frozen_.count(it->second.group) != 0;
}

bool ParamStore::all_frozen() const {
  for (const auto& [name, p] : params_) {
    if (!frozen_.count(p.group)) return false;
  }
  return true;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) {
    std::fill(p.grad.v.begin(), p.grad.v.end(), 0.0);
  }
}

double ParamStore::grad_abs_max() const {
  double m = 0.0;
  for (const auto& [name, p] : params_) {
    for (double g : p.grad.v) m = std::max(m, std::fabs(g));
  }
  return m;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.numel();
  return n;
}

void Sgd::step(ParamStore& store) {
  double scale = 1.0;
  if (clip_ > 0.0) {
    double sq = 0.0;
    for (auto& [name, p] : store.entries()) {
      if (store.is_frozen(name)) continue;
      for (int64_t i = 0; i < p.grad.numel(); ++i) sq += p.grad.v[i] * p.grad.v[i];
    }
    double norm = std::sqrt(sq);
    if (norm > clip_) scale = clip_ / norm;
  }
  for (auto& [name, p] : store.entries()) {
    if (store.is_frozen(name)) continue;
    if (momentum_ == 0.0) {
      for (int64_t i = 0; i < p.value.numel(); ++i) p.value.v[i] -= lr_ * scale * p.grad.v[i];
      continue;
    }
    auto it = velocity_.find(name);
    if (it == velocity_.end()) it = velocity_.emplace(name, Array(p.value.shape)).first;
    Array& vel = it->second;
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      vel.v[i] = momentum_ * vel.v[i] + scale * p.grad.v[i];
      p.value.v[i] -= lr_ * vel.v[i];
    }
  }
}

}  // namespace xd::diff
