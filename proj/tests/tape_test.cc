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
#include <functional>

#include "doctest.h"
#include "oracles.h"
#include "xd/error.h"
#include "xd/tape.h"

namespace {

using xd::Array;
using xd::AttnMask;
using xd::Rng;
using xd::diff::ParamStore;
using xd::diff::Tape;
using xd::diff::Var;

// Backprops `build` once, then compares every parameter gradient against
// central finite differences of the same forward.
double fd_op(ParamStore& ps, const std::function<Var(Tape&)>& build, double tol) {
  ps.zero_grads();
  Tape t(&ps);
  t.backward(build(t));
  oracle::FdReport rep = oracle::fd_check_params(ps, ps.names(), [&] {
    Tape t2(&ps);
    return t2.val(build(t2)).v[0];
  });
  CAPTURE(rep.worst);
  CHECK(rep.max_rel_err < tol);
  return rep.max_rel_err;
}

ParamStore two_params(std::vector<int> sa, std::vector<int> sb, uint64_t seed,
                      double scale = 1.0) {
  ParamStore ps;
  ps.add_randn("a", std::move(sa), scale, seed, "g");
  ps.add_randn("b", std::move(sb), scale, seed + 1, "g");
  return ps;
}

Array fixed_weights(const std::vector<int>& shape, uint64_t seed) {
  Rng rng(seed);
  Array w(shape);
  for (auto& v : w.v) v = rng.normal();
  return w;
}

}  // namespace

TEST_CASE("tape: elementwise ops match finite differences") {
  Array w = fixed_weights({3, 4}, 99);
  auto ws = [&](Tape& t, Var x) { return t.weighted_sum(x, w); };

  ParamStore ps = two_params({3, 4}, {3, 4}, 1);
  fd_op(ps, [&](Tape& t) { return ws(t, t.add(t.param("a"), t.param("b"))); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return ws(t, t.sub(t.param("a"), t.param("b"))); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return ws(t, t.mul(t.param("a"), t.param("b"))); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return ws(t, t.scale(t.param("a"), -1.7)); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return ws(t, t.add_const(t.param("a"), 0.31)); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return ws(t, t.one_minus(t.param("a"))); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return ws(t, t.tanh_op(t.param("a"))); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return ws(t, t.sigmoid_op(t.param("a"))); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return ws(t, t.exp_op(t.scale(t.param("a"), 0.5))); }, 1e-6);
}

TEST_CASE("tape: log works on positive inputs and rejects non-positive") {
  Array w = fixed_weights({2, 3}, 7);
  ParamStore ps;
  ps.add_randn("a", {2, 3}, 0.3, 3, "g");
  for (auto& v : ps.value("a").v) v = std::fabs(v) + 0.5;  // keep > 0 under +-eps
  fd_op(ps, [&](Tape& t) { return t.weighted_sum(t.log_op(t.param("a")), w); }, 1e-6);

  Tape t(&ps);
  Var bad = t.constant(Array({1, 1}));  // zero entry
  CHECK_THROWS_AS(t.log_op(bad), xd::NumericError);
}

TEST_CASE("tape: matrix ops match finite differences") {
  {
    ParamStore ps = two_params({3, 4}, {4, 2}, 11);
    Array w = fixed_weights({3, 2}, 12);
    fd_op(ps, [&](Tape& t) { return t.weighted_sum(t.matmul(t.param("a"), t.param("b")), w); },
          1e-6);
  }
  {
    ParamStore ps = two_params({3, 4}, {5, 4}, 13);
    Array w = fixed_weights({3, 5}, 14);
    fd_op(ps, [&](Tape& t) { return t.weighted_sum(t.matmul_nt(t.param("a"), t.param("b")), w); },
          1e-6);
  }
  {
    ParamStore ps = two_params({3, 4}, {4}, 15);
    Array w = fixed_weights({3, 4}, 16);
    fd_op(ps, [&](Tape& t) { return t.weighted_sum(t.add_rows(t.param("a"), t.param("b")), w); },
          1e-6);
    fd_op(ps,
          [&](Tape& t) { return t.weighted_sum(t.row_bcast_mul(t.param("a"), t.param("b")), w); },
          1e-6);
  }
  {
    // scale_bs: scalar node from a one-element param.
    ParamStore ps = two_params({3, 4}, {1}, 17);
    Array w = fixed_weights({3, 4}, 18);
    fd_op(ps,
          [&](Tape& t) {
            Var s = t.reshape(t.param("b"), {1, 1});
            return t.weighted_sum(t.scale_bs(t.param("a"), s), w);
          },
          1e-6);
  }
  {
    ParamStore ps = two_params({3, 4}, {3, 4}, 19);
    fd_op(ps, [&](Tape& t) { return t.dot(t.param("a"), t.param("b")); }, 1e-6);
  }
  {
    ParamStore ps = two_params({2, 3}, {4, 3}, 21);
    Array w = fixed_weights({8, 3}, 22);
    fd_op(ps,
          [&](Tape& t) {
            return t.weighted_sum(t.pairwise_row_sum(t.param("a"), t.param("b")), w);
          },
          1e-6);
  }
}

TEST_CASE("tape: pairwise_row_sum lays rows out as i*n + r") {
  Tape t;
  Array a({2, 2});
  a.v = {1, 2, 10, 20};
  Array b({2, 2});
  b.v = {100, 200, 1000, 2000};
  const Array& out = t.val(t.pairwise_row_sum(t.constant(a), t.constant(b)));
  REQUIRE(out.shape == std::vector<int>({4, 2}));
  CHECK(out.v == std::vector<double>({101, 202, 1001, 2002, 110, 220, 1010, 2020}));
}

TEST_CASE("tape: shape ops match finite differences") {
  Array w12 = fixed_weights({3, 4}, 31);
  {
    ParamStore ps = two_params({2, 6}, {1}, 32);
    fd_op(ps, [&](Tape& t) { return t.weighted_sum(t.reshape(t.param("a"), {3, 4}), w12); }, 1e-6);
  }
  {
    ParamStore ps = two_params({2, 4}, {3, 4}, 33);
    Array w = fixed_weights({5, 4}, 34);
    fd_op(ps,
          [&](Tape& t) { return t.weighted_sum(t.concat_rows(t.param("a"), t.param("b")), w); },
          1e-6);
    fd_op(ps,
          [&](Tape& t) {
            return t.weighted_sum(
                t.concat_rows_many({t.param("b"), t.param("a")}),
                fixed_weights({5, 4}, 35));
          },
          1e-6);
    fd_op(ps,
          [&](Tape& t) {
            return t.weighted_sum(t.slice_rows(t.param("b"), 1, 3), fixed_weights({2, 4}, 36));
          },
          1e-6);
  }
  {
    ParamStore ps = two_params({4, 3}, {1}, 37);
    fd_op(ps,
          [&](Tape& t) {
            return t.weighted_sum(t.mean_over_rows(t.param("a")), fixed_weights({3}, 38));
          },
          1e-6);
    fd_op(ps,
          [&](Tape& t) {
            return t.weighted_sum(t.sub_mean_all(t.param("a")), fixed_weights({4, 3}, 39));
          },
          1e-6);
    fd_op(ps, [&](Tape& t) { return t.sum_all(t.param("a")); }, 1e-6);
    fd_op(ps, [&](Tape& t) { return t.mean_all(t.param("a")); }, 1e-6);
  }
}

TEST_CASE("tape: softmax family") {
  // Uniform at zero logits.
  Tape t0;
  Array u = t0.val(t0.softmax_rows(t0.constant(Array({1, 4}))));
  for (int k = 0; k < 4; ++k) CHECK(u.v[k] == doctest::Approx(0.25).epsilon(1e-12));

  // Shift invariance and normalization. (val() references are invalidated
  // by later node creation, so take copies.)
  Rng rng(5);
  Array x = oracle::random_array({3, 5}, rng);
  Array shifted = x;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 5; ++k) shifted.v[r * 5 + k] += 7.25;
  Tape t1;
  Array p0 = t1.val(t1.softmax_rows(t1.constant(x)));
  Array p1 = t1.val(t1.softmax_rows(t1.constant(shifted)));
  for (int64_t i = 0; i < p0.numel(); ++i) CHECK(p0.v[i] == doctest::Approx(p1.v[i]).epsilon(1e-12));
  for (int r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int k = 0; k < 5; ++k) s += p0.v[r * 5 + k];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Gradients.
  Array w = fixed_weights({3, 5}, 41);
  ParamStore ps = two_params({3, 5}, {1}, 42);
  fd_op(ps, [&](Tape& t) { return t.weighted_sum(t.softmax_rows(t.param("a")), w); }, 1e-6);
  fd_op(ps, [&](Tape& t) { return t.weighted_sum(t.log_softmax_rows(t.param("a")), w); }, 1e-6);
}

TEST_CASE("tape: masked softmax zeroes masked entries and differentiates") {
  AttnMask mask = AttnMask::causal(4);
  ParamStore ps = two_params({4, 4}, {1}, 43);
  Tape t(&ps);
  Array p = t.val(t.masked_softmax_rows(t.param("a"), mask));
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (j > i) CHECK(p.v[i * 4 + j] == 0.0);  // exactly zero, not just small
      s += p.v[i * 4 + j];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  Array w = fixed_weights({4, 4}, 44);
  fd_op(ps, [&](Tape& t2) { return t2.weighted_sum(t2.masked_softmax_rows(t2.param("a"), mask), w); },
        1e-6);

  AttnMask dead = AttnMask::identity(2);
  dead.set(1, 1, false);
  Tape t3(&ps);
  CHECK_THROWS_AS(t3.masked_softmax_rows(t3.constant(Array({2, 2})), dead), xd::NumericError);
}

TEST_CASE("tape: embedding rows accumulate over repeated ids") {
  ParamStore ps;
  ps.add_randn("table", {5, 3}, 1.0, 51, "g");
  std::vector<int> ids = {0, 2, 2, 4};
  Array w = fixed_weights({4, 3}, 52);
  fd_op(ps, [&](Tape& t) { return t.weighted_sum(t.embedding_rows(t.param("table"), ids), w); },
        1e-6);

  Tape t(&ps);
  CHECK_THROWS_AS(t.embedding_rows(t.param("table"), std::vector<int>{5}), xd::ConfigError);
}

TEST_CASE("tape: rnnt_nll gradient matches finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 4; ++trial) {
    int T = rng.uniform_int(1, 4), U = rng.uniform_int(0, 3), K = rng.uniform_int(2, 4);
    std::vector<int> y = oracle::random_transcript(U, K, rng);
    ParamStore ps;
    ps.add_randn("lat", {T * (U + 1), K}, 1.0, 60 + trial, "g");
    fd_op(ps, [&](Tape& t) { return t.rnnt_nll(t.param("lat"), T, U, y); }, 1e-5);
  }
}

TEST_CASE("tape: frozen groups receive exactly zero gradient") {
  ParamStore ps;
  ps.add_randn("enc.w", {3, 3}, 1.0, 70, "enc");
  ps.add_randn("dec.w", {3, 3}, 1.0, 71, "dec");
  ps.freeze_group("enc");
  Tape t(&ps);
  Var y = t.matmul(t.param("enc.w"), t.param("dec.w"));
  t.backward(t.sum_all(y));
  for (double g : ps.grad("enc.w").v) CHECK(g == 0.0);
  double mx = 0.0;
  for (double g : ps.grad("dec.w").v) mx = std::max(mx, std::fabs(g));
  CHECK(mx > 0.0);
}

TEST_CASE("tape: grad sinks capture gradients instead of the store") {
  ParamStore ps;
  ps.add_randn("w", {2, 2}, 1.0, 80, "g");
  std::map<std::string, Array> sink;
  Tape t(&ps, &sink);
  t.backward(t.sum_all(t.param("w")));
  REQUIRE(sink.count("w") == 1);
  for (double g : sink["w"].v) CHECK(g == 1.0);
  for (double g : ps.grad("w").v) CHECK(g == 0.0);
}

TEST_CASE("tape: single use, foreign vars, and shape mismatches are rejected") {
  ParamStore ps;
  ps.add_randn("w", {2, 2}, 1.0, 90, "g");
  Tape t(&ps);
  Var s = t.sum_all(t.param("w"));
  t.backward(s);
  CHECK_THROWS_AS(t.backward(s), xd::ConfigError);

  Tape t2(&ps);
  Var a = t2.param("w");
  Tape t3(&ps);
  CHECK_THROWS_AS(t3.val(Var{a.id + 100}), xd::ConfigError);
  CHECK_THROWS_AS(t2.add(a, t2.constant(Array({3, 3}))), xd::ConfigError);
}
