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
#include "xd/transducer.h"

namespace {

using xd::Array;
using xd::Rng;
using xd::corpus::Signal;
using xd::diff::Tape;
using xd::diff::Var;
using xd::model::ModelConfig;
using xd::model::PosteriorLattice;
using xd::model::TransducerModel;

// Small-everything config used across the model tests.
ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.window = 8;
  cfg.hop = 4;
  cfg.h = 4;
  cfg.enc_blocks = 2;
  cfg.ff = 6;
  cfg.pred_dim = 4;
  cfg.joint_dim = 4;
  cfg.k_vocab = 4;
  cfg.spk_blocks = 2;
  return cfg;
}

Signal random_signal(int n, Rng& rng) {
  Signal s(n);
  for (double& x : s) x = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("transducer: rnnt loss on forced single-path lattices") {
  Rng rng(1);
  // T=1, U=0: the only alignment is one final blank.
  PosteriorLattice lat = oracle::random_lattice(1, 0, 3, rng);
  auto res = xd::model::rnnt_loss(lat, {});
  CHECK(res.loss == doctest::Approx(-lat.log_prob(0, 0, 0)).epsilon(1e-12));
}

TEST_CASE("transducer: uniform 2x1x3 lattice matches path enumeration") {
  // Two monotone alignments exist (blank-label-blank and label-blank-blank),
  // each with probability (1/3)^3, so the NLL is -log(2/27) = log 13.5.
  PosteriorLattice lat;
  lat.T = 2;
  lat.U = 1;
  lat.K = 3;
  lat.log_probs = Array({4, 3}, std::log(1.0 / 3.0));
  auto res = xd::model::rnnt_loss(lat, {2});
  CHECK(res.loss == doctest::Approx(std::log(13.5)).epsilon(1e-12));
  CHECK(res.loss == doctest::Approx(oracle::rnnt_nll_bruteforce(lat, {2})).epsilon(1e-12));
}

TEST_CASE("transducer: rnnt loss matches brute-force enumeration on small shapes") {
  Rng rng(2);
  for (int T = 1; T <= 4; ++T)
    for (int U = 0; U <= 3; ++U)
      for (int K = 2; K <= 4; ++K)
        for (int rep = 0; rep < 10; ++rep) {
          PosteriorLattice lat = oracle::random_lattice(T, U, K, rng);
          std::vector<int> y = oracle::random_transcript(U, K, rng);
          double dp = xd::model::rnnt_loss(lat, y).loss;
          double brute = oracle::rnnt_nll_bruteforce(lat, y);
          CHECK(std::fabs(dp - brute) < 1e-9);
        }
}

TEST_CASE("transducer: rnnt gradient is an occupancy measure") {
  Rng rng(3);
  PosteriorLattice lat = oracle::random_lattice(4, 3, 4, rng);
  std::vector<int> y = oracle::random_transcript(3, 4, rng);
  auto res = xd::model::rnnt_loss(lat, y);

  // Every alignment leaves exactly one cell on each anti-diagonal t+u = n,
  // so the negated log-prob gradients on that diagonal sum to 1.
  for (int n = 0; n < lat.T + lat.U; ++n) {
    double mass = 0.0;
    for (int t = 0; t < lat.T; ++t) {
      int u = n - t;
      if (u < 0 || u > lat.U) continue;
      for (int k = 0; k < lat.K; ++k)
        mass -= res.grad_log_probs.v[(static_cast<int64_t>(t) * (lat.U + 1) + u) * lat.K + k];
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }

  // Blank from (T-1, u<U) leaves the lattice without completing: zero mass.
  for (int u = 0; u < lat.U; ++u) {
    int64_t idx = (static_cast<int64_t>(lat.T - 1) * (lat.U + 1) + u) * lat.K;
    CHECK(res.grad_log_probs.v[idx] == 0.0);
  }

  // d loss / d p = (d loss / d log p) / p.
  for (int64_t i = 0; i < res.grad_probs.numel(); ++i)
    CHECK(res.grad_probs.v[i] ==
          doctest::Approx(res.grad_log_probs.v[i] / std::exp(lat.log_probs.v[i])).epsilon(1e-12));
}

TEST_CASE("transducer: rnnt rejects malformed inputs") {
  Rng rng(4);
  PosteriorLattice lat = oracle::random_lattice(2, 1, 3, rng);
  CHECK_THROWS_AS(xd::model::rnnt_loss(lat, {0}), xd::ConfigError);   // blank in transcript
  CHECK_THROWS_AS(xd::model::rnnt_loss(lat, {1, 2}), xd::ConfigError);  // U mismatch
  PosteriorLattice empty;
  empty.K = 3;
  CHECK_THROWS_AS(xd::model::rnnt_loss(empty, {}), xd::ConfigError);  // T = 0
}

TEST_CASE("transducer: lattice rows are normalized distributions") {
  ModelConfig cfg = tiny_config();
  TransducerModel m;
  m.cfg = cfg;
  m.init(5);
  Rng rng(6);
  Signal sig = random_signal(40, rng);
  PosteriorLattice lat = xd::model::transducer_lattice(m, sig, {1, 3, 2});
  REQUIRE(lat.T == (40 - cfg.window) / cfg.hop + 1);
  REQUIRE(lat.U == 3);
  for (int t = 0; t < lat.T; ++t)
    for (int u = 0; u <= lat.U; ++u) {
      double s = 0.0;
      for (int k = 0; k < lat.K; ++k) {
        double p = lat.prob(t, u, k);
        CHECK(p > 0.0);
        CHECK(p <= 1.0);
        s += p;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("transducer: joint lattice shape and functional determinism") {
  ModelConfig cfg = tiny_config();
  TransducerModel m;
  m.cfg = cfg;
  m.init(7);
  Rng rng(8);

  Array enc1 = oracle::random_array({1, cfg.h}, rng);
  Array pred0 = xd::model::predict(m, {});
  PosteriorLattice lat = xd::model::joint_lattice(m, enc1, pred0);
  CHECK(lat.T == 1);
  CHECK(lat.U == 0);
  CHECK(lat.K == cfg.k_vocab);
  CHECK(lat.log_probs.shape == std::vector<int>({1, cfg.k_vocab}));

  // Duplicate encoder rows produce identical lattice slices.
  Array enc({2, cfg.h});
  for (int c = 0; c < cfg.h; ++c) enc.at(0, c) = enc.at(1, c) = enc1.v[c];
  Array pred = xd::model::predict(m, {2, 1});
  PosteriorLattice two = xd::model::joint_lattice(m, enc, pred);
  for (int u = 0; u <= two.U; ++u)
    for (int k = 0; k < two.K; ++k) CHECK(two.log_prob(0, u, k) == two.log_prob(1, u, k));
}

TEST_CASE("transducer: prediction network causality and validation") {
  ModelConfig cfg = tiny_config();
  TransducerModel m;
  m.cfg = cfg;
  m.init(9);

  Array empty = xd::model::predict(m, {});
  CHECK(empty.shape == std::vector<int>({1, cfg.pred_dim}));
  for (double v : empty.v) CHECK(v == 0.0);  // start state

  // Prefix property: shared prefix rows are bit-identical.
  Array p1 = xd::model::predict(m, {3, 1});
  Array p2 = xd::model::predict(m, {3, 2, 1});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < cfg.pred_dim; ++c) CHECK(p1.at(r, c) == p2.at(r, c));
  bool differs = false;
  for (int c = 0; c < cfg.pred_dim; ++c) differs |= p1.at(2, c) != p2.at(2, c);
  CHECK(differs);

  CHECK_THROWS_AS(xd::model::predict(m, {1, 0, 2}), xd::ConfigError);
  CHECK_THROWS_AS(xd::model::predict(m, {cfg.k_vocab}), xd::ConfigError);
}

TEST_CASE("transducer: all-ones conditioning is exactly the identity") {
  ModelConfig cfg = tiny_config();
  TransducerModel m;
  m.cfg = cfg;
  m.init(10);
  Rng rng(11);
  Signal sig = random_signal(48, rng);
  Array feats = xd::model::model_features(sig, cfg).frames;

  Tape t(&m.ps);
  Var plain = xd::model::encode(t, cfg, feats);
  Var ones = xd::model::encode(t, cfg, feats, t.constant(Array({cfg.h}, 1.0)));
  CHECK(t.val(plain).v == t.val(ones).v);

  Tape t2(&m.ps);
  CHECK_THROWS_AS(
      xd::model::encode(t2, cfg, feats, t2.constant(Array({cfg.h + 1}, 1.0))),
      xd::ConfigError);
}

TEST_CASE("transducer: chunk mask window arithmetic") {
  using xd::model::build_chunk_mask;

  // Single chunk covering everything: all-true.
  xd::AttnMask all = build_chunk_mask(5, 5, 0);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(all.at(i, j));

  // chunk=1, history=0: identity.
  xd::AttnMask ident = build_chunk_mask(4, 1, 0);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(ident.at(i, j) == (i == j));

  // T=180, chunk=60, history=68: frame 65 sees exactly frames 0..119.
  xd::AttnMask m = build_chunk_mask(180, 60, 68);
  for (int j = 0; j < 180; ++j) CHECK(m.at(65, j) == (j <= 119));
}

TEST_CASE("transducer: chunked receptive field is exact") {
  ModelConfig cfg = tiny_config();
  cfg.enc_blocks = 1;  // one block: the mask window is the receptive field
  cfg.streaming = true;
  cfg.chunk = 3;
  cfg.history = 2;
  TransducerModel m;
  m.cfg = cfg;
  m.init(12);
  Rng rng(13);
  Signal sig = random_signal(10 * cfg.hop + cfg.window, rng);  // 11 frames
  Array feats = xd::model::model_features(sig, cfg).frames;
  int T = feats.rows();
  xd::AttnMask mask = xd::model::build_chunk_mask(T, cfg.chunk, cfg.history);

  Tape t(&m.ps);
  Array base = t.val(xd::model::encode(t, cfg, feats));
  for (int row = 0; row < T; ++row) {
    for (int j = 0; j < T; ++j) {
      if (mask.at(row, j)) continue;
      Array mod = feats;
      mod.at(j, 1) += 3.0;
      Tape t2(&m.ps);
      Array enc = t2.val(xd::model::encode(t2, cfg, mod));
      for (int c = 0; c < cfg.h; ++c) CHECK(enc.at(row, c) == base.at(row, c));
    }
  }
}

TEST_CASE("transducer: future frames never reach earlier chunks, any depth") {
  ModelConfig cfg = tiny_config();
  cfg.streaming = true;  // enc_blocks = 2: lookahead still bounded per chunk
  cfg.chunk = 3;
  cfg.history = 2;
  TransducerModel m;
  m.cfg = cfg;
  m.init(14);
  Rng rng(15);
  Signal sig = random_signal(10 * cfg.hop + cfg.window, rng);
  Array feats = xd::model::model_features(sig, cfg).frames;
  int T = feats.rows();

  Tape t(&m.ps);
  Array base = t.val(xd::model::encode(t, cfg, feats));
  for (int j = 0; j < T; ++j) {
    Array mod = feats;
    mod.at(j, 0) -= 2.0;
    Tape t2(&m.ps);
    Array enc = t2.val(xd::model::encode(t2, cfg, mod));
    int first_affected_chunk = j / cfg.chunk;
    for (int row = 0; row < T; ++row) {
      if (row / cfg.chunk >= first_affected_chunk) continue;
      for (int c = 0; c < cfg.h; ++c) CHECK(enc.at(row, c) == base.at(row, c));
    }
  }
}

TEST_CASE("transducer: full model gradients match finite differences") {
  ModelConfig cfg = tiny_config();
  TransducerModel m;
  m.cfg = cfg;
  m.init(16);
  Rng rng(17);
  Signal sig = random_signal(32, rng);
  std::vector<int> y = {2, 1};
  Array feats = xd::model::model_features(sig, cfg).frames;

  auto forward = [&](Tape& t) {
    Var enc = xd::model::encode(t, cfg, feats);
    Var pred = xd::model::predict_states(t, cfg, y);
    Var lp = xd::model::joint_lattice_logp(t, cfg, enc, pred);
    return t.rnnt_nll(lp, t.val(enc).rows(), static_cast<int>(y.size()), y);
  };

  m.ps.zero_grads();
  Tape t(&m.ps);
  t.backward(forward(t));
  oracle::FdReport rep = oracle::fd_check_params(m.ps, m.ps.names(), [&] {
    Tape t2(&m.ps);
    return t2.val(forward(t2)).v[0];
  });
  CAPTURE(rep.worst);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("transducer: decoder forward rows are bit-identical to the tape") {
  ModelConfig cfg = tiny_config();
  TransducerModel m;
  m.cfg = cfg;
  m.init(18);
  Rng rng(19);
  Signal sig = random_signal(40, rng);
  std::vector<int> y = {3, 1, 2};

  Array enc = xd::model::encode_signal(m, sig);
  Array pred_tape = xd::model::predict(m, y);

  // pred_step chain reproduces predict_states rows exactly.
  Array h = xd::model::pred_start_state(cfg, m.ps);
  for (int c = 0; c < cfg.pred_dim; ++c) CHECK(h.v[c] == pred_tape.at(0, c));
  for (size_t u = 0; u < y.size(); ++u) {
    h = xd::model::pred_step(cfg, m.ps, h, y[u]);
    for (int c = 0; c < cfg.pred_dim; ++c) CHECK(h.v[c] == pred_tape.at(static_cast<int>(u) + 1, c));
  }

  // joint_logp_row reproduces the lattice rows exactly.
  PosteriorLattice lat = xd::model::joint_lattice(m, enc, pred_tape);
  for (int t = 0; t < lat.T; ++t) {
    Array row = xd::model::joint_logp_row(cfg, m.ps, &enc.v[static_cast<int64_t>(t) * cfg.h],
                                           xd::model::pred_start_state(cfg, m.ps));
    for (int k = 0; k < lat.K; ++k) CHECK(row.v[k] == lat.log_prob(t, 0, k));
  }
}
