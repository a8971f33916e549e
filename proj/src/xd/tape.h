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

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "xd/array.h"
#include "xd/params.h"

namespace xd::diff {

// Handle to a node on a Tape. Only valid for the tape that created it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Array values. One tape per forward pass;
// backward() may be called once, after which the tape is spent.
//
// Parameters are bound through a ParamStore: param() reads the current
// value and backward() accumulates into the store's grad buffers. Params
// whose group is frozen behave as constants — their store gradients stay
// exactly zero and no backward work is spent on subgraphs that only
// depend on frozen params and constants.
class Tape {
 public:
  explicit Tape(ParamStore* store = nullptr) : store_(store) {}
  // When grad_sink is given, backward() writes param gradients there instead
  // of into the store. Lets independent batch items run on worker threads
  // with private sinks, merged afterwards in item order (deterministic
  // regardless of thread count). The store is only read.
  Tape(ParamStore* store, std::map<std::string, Array>* grad_sink)
      : store_(store), grad_sink_(grad_sink) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array a);
  Var zeros(std::vector<int> shape) { return constant(Array(std::move(shape))); }
  // Like constant, but participates in backward so grad_of() is available
  // (used by standalone loss APIs that report lattice gradients).
  Var input(Array a);
  Var param(const std::string& name);

  const Array& val(Var v) const;
  const Array& grad_of(Var v) const;

  // Elementwise, shapes must match unless noted.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);        // c * a
  Var add_const(Var a, double c);    // a + c
  Var one_minus(Var a);              // 1 - a
  Var tanh_op(Var a);
  Var sigmoid_op(Var a);
  Var exp_op(Var a);
  Var log_op(Var a);                 // natural log; input must be > 0

  // Matrix / vector ops on 2-D [rows, cols] (1-D treated as noted).
  Var matmul(Var a, Var b);          // [m,k] x [k,n] -> [m,n]
  Var matmul_nt(Var a, Var b);       // [m,k] x [n,k]^T -> [m,n]
  Var add_rows(Var a, Var bias);     // a [m,n] + bias [n], broadcast over rows
  Var row_bcast_mul(Var a, Var r);   // a [m,n] * r [n], broadcast over rows
  Var scale_bs(Var a, Var s);        // s scalar node; s * a
  Var dot(Var a, Var b);             // sum(a*b) -> scalar, any equal shape
  Var weighted_sum(Var a, Array w);  // sum(w*a) -> scalar, w is constant data
  // All pairwise row sums: a [m,j], b [n,j] -> [m*n, j],
  // row i*n+r = a[i] + b[r]. The transducer joint's combiner.
  Var pairwise_row_sum(Var a, Var b);

  // Shape ops.
  Var reshape(Var a, std::vector<int> shape);
  Var concat_rows(Var a, Var b);
  Var concat_rows_many(const std::vector<Var>& parts);
  Var slice_rows(Var a, int r0, int r1);  // rows [r0, r1)
  Var mean_over_rows(Var a);              // [m,n] -> [n]
  Var sub_mean_all(Var a);                // a - mean(a)
  Var sum_all(Var a);                     // -> scalar
  Var mean_all(Var a);                    // -> scalar

  // Row-wise softmax family on [m,n].
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  // Masked entries are exactly 0 in the output; each row must have at
  // least one allowed entry. mask is [m,n].
  Var masked_softmax_rows(Var a, const AttnMask& mask);

  // table [v,h], ids in [0,v) -> [len(ids), h].
  Var embedding_rows(Var table, const std::vector<int>& ids);

  // Transducer negative log-likelihood over a log-prob lattice.
  // logprobs is [T*(U+1), K] with row t*(U+1)+u holding log P(k | t, u).
  // labels has U entries in [1, K); blank is symbol 0. Returns a scalar.
  Var rnnt_nll(Var logprobs, int T, int U, const std::vector<int>& labels);

  // Accumulates gradients of a scalar root into bound params. Single use.
  void backward(Var root);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Array val;
    Array grad;
    bool needs_grad = false;
    std::function<void()> back;  // empty for constants / leaves
    int param_id = -1;           // index into param_names_ when a param leaf
  };

  Var make(Array val, bool needs_grad, std::function<void()> back);
  const Node& node(Var v) const;
  Node& node(Var v);
  void check2d(Var v, const char* op) const;

  ParamStore* store_;
  std::map<std::string, Array>* grad_sink_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<std::string> param_names_;
  bool used_ = false;
};

}  // namespace xd::diff
