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

#include "xd/nn.h"

#include <algorithm>
#include <cmath>

namespace xd::diff {

void add_affine(ParamStore& ps, const std::string& prefix, int in, int out, double stddev,
                uint64_t seed, const std::string& group) {
  ps.add_randn(prefix + ".w", {in, out}, stddev, seed, group);
  ps.add(prefix + ".b", Array({out}), group);
}

void add_affine_eye(ParamStore& ps, const std::string& prefix, int in, int out, double noise,
                    uint64_t seed, const std::string& group) {
  Array& w = ps.add_randn(prefix + ".w", {in, out}, noise, seed, group);
  for (int i = 0; i < std::min(in, out); ++i) w.v[static_cast<int64_t>(i) * out + i] += 1.0;
  ps.add(prefix + ".b", Array({out}), group);
}

Var affine(Tape& t, Var x, const std::string& prefix) {
  return t.add_rows(t.matmul(x, t.param(prefix + ".w")), t.param(prefix + ".b"));
}

void add_attention_block(ParamStore& ps, const std::string& prefix, int h, int ff, double stddev,
                         uint64_t seed, const std::string& group) {
  add_affine(ps, prefix + ".wq", h, h, stddev, seed, group);
  add_affine(ps, prefix + ".wk", h, h, stddev, seed, group);
  add_affine(ps, prefix + ".wv", h, h, stddev, seed, group);
  add_affine(ps, prefix + ".wo", h, h, stddev, seed, group);
  add_affine(ps, prefix + ".ff1", h, ff, stddev, seed, group);
  add_affine(ps, prefix + ".ff2", ff, h, stddev, seed, group);
}

Var attention_block(Tape& t, Var x, const AttnMask& mask, const std::string& prefix) {
  int h = t.val(x).cols();
  Var q = affine(t, x, prefix + ".wq");
  Var k = affine(t, x, prefix + ".wk");
  Var v = affine(t, x, prefix + ".wv");
  Var scores = t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(h)));
  Var attn = t.masked_softmax_rows(scores, mask);
  Var ctx = t.matmul(attn, v);
  Var x1 = t.add(x, affine(t, ctx, prefix + ".wo"));
  Var ffn = affine(t, t.tanh_op(affine(t, x1, prefix + ".ff1")), prefix + ".ff2");
  return t.add(x1, ffn);
}

void add_gated_cell(ParamStore& ps, const std::string& prefix, int in, int dim, double stddev,
                    uint64_t seed, const std::string& group) {
  ps.add_randn(prefix + ".wz", {in, dim}, stddev, seed, group);
  ps.add_randn(prefix + ".uz", {dim, dim}, stddev, seed, group);
  ps.add(prefix + ".bz", Array({dim}), group);
  ps.add_randn(prefix + ".wc", {in, dim}, stddev, seed, group);
  ps.add_randn(prefix + ".uc", {dim, dim}, stddev, seed, group);
  ps.add(prefix + ".bc", Array({dim}), group);
}

Var gated_step(Tape& t, Var x, Var h, const std::string& prefix) {
  Var z = t.sigmoid_op(t.add_rows(
      t.add(t.matmul(x, t.param(prefix + ".wz")), t.matmul(h, t.param(prefix + ".uz"))),
      t.param(prefix + ".bz")));
  Var c = t.tanh_op(t.add_rows(
      t.add(t.matmul(x, t.param(prefix + ".wc")), t.matmul(h, t.param(prefix + ".uc"))),
      t.param(prefix + ".bc")));
  return t.add(t.mul(z, h), t.mul(t.one_minus(z), c));
}

}  // namespace xd::diff
