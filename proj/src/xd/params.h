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
#include <set>
#include <string>
#include <vector>

#include "xd/array.h"
#include "xd/rng.h"

namespace xd::diff {

// Named parameter arrays with gradient accumulators. Parameters belong to
// a group (the leading name component, e.g. "enc" in "enc.b0.attn.wq");
// frozen groups accumulate exactly zero gradient.
class ParamStore {
 public:
  struct Param {
    Array value;
    Array grad;
    std::string group;
  };

  Array& add(const std::string& name, Array value, const std::string& group);
  // Gaussian init with the given standard deviation, seeded by (seed, name)
  // so values depend only on the name, not on insertion order.
  Array& add_randn(const std::string& name, std::vector<int> shape, double stddev,
                   uint64_t seed, const std::string& group);

  bool has(const std::string& name) const { return params_.count(name) != 0; }
  const Array& value(const std::string& name) const;
  Array& value(const std::string& name);
  Array& grad(const std::string& name);
  const std::string& group_of(const std::string& name) const;

  void freeze_group(const std::string& group) { frozen_.insert(group); }
  void freeze_all();
  bool is_frozen(const std::string& name) const;
  bool all_frozen() const;

  void zero_grads();
  double grad_abs_max() const;

  // Sorted by name (map order), so iteration and serialization are stable.
  std::vector<std::string> names() const;
  size_t size() const { return params_.size(); }
  int64_t total_elements() const;

  const std::map<std::string, Param>& entries() const { return params_; }
  std::map<std::string, Param>& entries() { return params_; }

 private:
  std::map<std::string, Param> params_;
  std::set<std::string> frozen_;
};

// Plain SGD with optional momentum and global-norm gradient clipping
// (clip <= 0 disables it). Velocity buffers keyed by name.
class Sgd {
 public:
  Sgd(double lr, double momentum, double clip = 0.0)
      : lr_(lr), momentum_(momentum), clip_(clip) {}
  void step(ParamStore& store);
  double lr() const { return lr_; }

 private:
  double lr_;
  double momentum_;
  double clip_;
  std::map<std::string, Array> velocity_;
};

}  // namespace xd::diff
