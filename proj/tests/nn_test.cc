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

#include <cmath>

#include "doctest.h"
#include "oracles.h"
#include "xd/error.h"
#include "xd/nn.h"

namespace {

using xd::Array;
using xd::AttnMask;
using xd::Rng;
using xd::diff::ParamStore;
using xd::diff::Tape;
using xd::diff::Var;

double fd_through(ParamStore& ps, const std::function<Var(Tape&)>& build) {
  ps.zero_grads();
  Tape t(&ps);
  t.backward(build(t));
  oracle::FdReport rep = oracle::fd_check_params(ps, ps.names(), [&] {
    Tape t2(&ps);
    return t2.val(build(t2)).v[0];
  });
  CAPTURE(rep.worst);
  return rep.max_rel_err;
}

}  // namespace

TEST_CASE("nn: affine identity and zero-input behavior") {
  ParamStore ps;
  ps.add("p.w", Array::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), "g");
  ps.add("p.b", Array({3}), "g");
  Rng rng(1);
  Array x = oracle::random_array({4, 3}, rng);

  Tape t(&ps);
  const Array& y = t.val(xd::diff::affine(t, t.constant(x), "p"));
  CHECK(y.v == x.v);  // identity weights, zero bias: exact

  ParamStore ps2;
  ps2.add_randn("p.w", {3, 2}, 1.0, 2, "g");
  ps2.add_randn("p.b", {2}, 1.0, 3, "g");
  Tape t2(&ps2);
  const Array& rows = t2.val(xd::diff::affine(t2, t2.constant(Array({4, 3})), "p"));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 2; ++c) CHECK(rows.at(r, c) == ps2.value("p.b").v[c]);
}

TEST_CASE("nn: affine gradients match finite differences") {
  ParamStore ps;
  xd::diff::add_affine(ps, "p", 4, 3, 0.5, 7, "g");
  Rng rng(8);
  Array x = oracle::random_array({5, 4}, rng);
  Array w = oracle::random_array({5, 3}, rng);
  double err = fd_through(ps, [&](Tape& t) {
    return t.weighted_sum(xd::diff::affine(t, t.constant(x), "p"), w);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("nn: gated recurrence is causal and differentiable") {
  ParamStore ps;
  xd::diff::add_gated_cell(ps, "cell", 3, 3, 0.7, 11, "g");
  Rng rng(12);
  std::vector<Array> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(oracle::random_array({1, 3}, rng));

  auto run = [&](const std::vector<Array>& inputs) {
    Tape t(&ps);
    Var h = t.zeros({1, 3});
    std::vector<Array> states;
    for (const Array& x : inputs) {
      h = xd::diff::gated_step(t, t.constant(x), h, "cell");
      states.push_back(t.val(h));
    }
    return states;
  };

  // Perturbing step 3 leaves steps 0..2 bit-identical.
  std::vector<Array> states = run(xs);
  std::vector<Array> perturbed = xs;
  perturbed[3].v[1] += 0.37;
  std::vector<Array> states2 = run(perturbed);
  for (int i = 0; i < 3; ++i) CHECK(states[i].v == states2[i].v);
  CHECK(states[3].v != states2[3].v);

  // Zero weights and bias: z = 1/2, c = 0, so every state stays 0.
  ParamStore zero;
  xd::diff::add_gated_cell(zero, "cell", 3, 3, 0.0, 0, "g");
  Tape tz(&zero);
  Var h = tz.zeros({1, 3});
  for (int i = 0; i < 3; ++i) h = xd::diff::gated_step(tz, tz.constant(xs[0]), h, "cell");
  for (double v : tz.val(h).v) CHECK(v == 0.0);

  // Gradient through 5 steps.
  Array w = oracle::random_array({1, 3}, rng);
  double err = fd_through(ps, [&](Tape& t) {
    Var s = t.zeros({1, 3});
    for (const Array& x : xs) s = xd::diff::gated_step(t, t.constant(x), s, "cell");
    return t.weighted_sum(s, w);
  });
  CHECK(err < 1e-5);
}

TEST_CASE("nn: attention block respects the mask and differentiates") {
  ParamStore ps;
  xd::diff::add_attention_block(ps, "blk", 4, 6, 0.5, 21, "g");
  Rng rng(22);
  Array x = oracle::random_array({5, 4}, rng);

  auto run = [&](const Array& input, const AttnMask& mask) {
    Tape t(&ps);
    return t.val(xd::diff::attention_block(t, t.constant(input), mask, "blk"));
  };

  // Identity mask: row i depends only on input row i.
  Array x2 = x;
  for (int c = 0; c < 4; ++c) x2.at(3, c) += 0.5;
  Array y1 = run(x, AttnMask::identity(5));
  Array y2 = run(x2, AttnMask::identity(5));
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (r == 3) continue;
      CHECK(y1.at(r, c) == y2.at(r, c));
    }
  }
  CHECK(y1.v != y2.v);

  // Full vs causal masks disagree somewhere before the last row.
  Array yf = run(x, AttnMask::full(5));
  Array yc = run(x, AttnMask::causal(5));
  bool differs_early = false;
  for (int r = 0; r + 1 < 5 && !differs_early; ++r)
    for (int c = 0; c < 4; ++c)
      if (yf.at(r, c) != yc.at(r, c)) {
        differs_early = true;
        break;
      }
  CHECK(differs_early);

  // Gradients under a causal mask.
  Array w = oracle::random_array({5, 4}, rng);
  double err = fd_through(ps, [&](Tape& t) {
    return t.weighted_sum(
        xd::diff::attention_block(t, t.constant(x), AttnMask::causal(5), "blk"), w);
  });
  CHECK(err < 1e-5);
}
