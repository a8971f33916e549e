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

#include "xd/transducer.h"

#include <algorithm>
#include <cmath>

#include "xd/error.h"
#include "xd/nn.h"

namespace xd::model {

using diff::Tape;
using diff::Var;

void ModelConfig::validate() const {
  if (window < 1 || hop < 1 || subsample < 1) throw ConfigError("model: bad front-end config");
  if (h < 1 || enc_blocks < 1 || ff < 1 || pred_dim < 1 || joint_dim < 1 || spk_blocks < 1)
    throw ConfigError("model: widths/depths must be >= 1");
  if (k_vocab < 2) throw ConfigError("model: k_vocab must be >= 2 (blank + one token)");
  if (streaming && (chunk < 1 || history < 0))
    throw ConfigError("model: streaming requires chunk >= 1 and history >= 0");
}

Array PosteriorLattice::probs() const {
  Array p(log_probs.shape);
  for (int64_t i = 0; i < p.numel(); ++i) p.v[i] = std::exp(log_probs.v[i]);
  return p;
}

double PosteriorLattice::prob(int t, int u, int k) const { return std::exp(log_prob(t, u, k)); }

void add_encoder_params(diff::ParamStore& ps, const ModelConfig& cfg, uint64_t seed) {
  // Near-identity input projection: feature coordinates pass straight into
  // the conditioning product, so a speaker embedding can modulate them
  // without first having to discover a shared rotation.
  diff::add_affine_eye(ps, "enc.inproj", cfg.window, cfg.h, 0.05, seed, "enc");
  for (int b = 0; b < cfg.enc_blocks; ++b)
    diff::add_attention_block(ps, "enc.b" + std::to_string(b), cfg.h, cfg.ff,
                              1.0 / std::sqrt(cfg.h), seed, "enc");
}

void add_pred_joint_params(diff::ParamStore& ps, const ModelConfig& cfg, uint64_t seed) {
  ps.add_randn("pred.embed", {cfg.k_vocab, cfg.pred_dim}, 1.0 / std::sqrt(cfg.pred_dim), seed,
               "pred");
  diff::add_gated_cell(ps, "pred.cell", cfg.pred_dim, cfg.pred_dim, 1.0 / std::sqrt(cfg.pred_dim),
                       seed, "pred");
  diff::add_affine(ps, "joint.eproj", cfg.h, cfg.joint_dim, 1.0 / std::sqrt(cfg.h), seed, "joint");
  diff::add_affine(ps, "joint.pproj", cfg.pred_dim, cfg.joint_dim, 1.0 / std::sqrt(cfg.pred_dim),
                   seed, "joint");
  diff::add_affine(ps, "joint.out", cfg.joint_dim, cfg.k_vocab, 1.0 / std::sqrt(cfg.joint_dim),
                   seed, "joint");
}

void TransducerModel::init(uint64_t seed) {
  cfg.validate();
  add_encoder_params(ps, cfg, seed);
  add_pred_joint_params(ps, cfg, seed);
}

FeatureSequence model_features(const Signal& signal, const ModelConfig& cfg) {
  return extract_features(signal, cfg.window, cfg.hop);
}

AttnMask build_chunk_mask(int T, int chunk, int history) {
  if (T < 1) throw ConfigError("build_chunk_mask: T must be >= 1");
  if (chunk < 1 || history < 0) throw ConfigError("build_chunk_mask: bad chunk/history");
  AttnMask mask;
  mask.rows = mask.cols = T;
  mask.m.assign(static_cast<size_t>(T) * T, 0);
  for (int t = 0; t < T; ++t) {
    int c = t / chunk;
    int lo = std::max(0, c * chunk - history);
    int hi = std::min(T, (c + 1) * chunk) - 1;
    for (int j = lo; j <= hi; ++j) mask.set(t, j, true);
  }
  return mask;
}

Var encode(Tape& t, const ModelConfig& cfg, const Array& feat_frames, Var cond) {
  if (feat_frames.ndim() != 2 || feat_frames.cols() != cfg.window)
    throw ConfigError("encode: features must be [T', window]");
  Array pooled = subsample_frames(feat_frames, cfg.subsample);
  int T = pooled.rows();
  AttnMask mask = cfg.streaming ? build_chunk_mask(T, cfg.chunk, cfg.history) : AttnMask::full(T);

  Var x = diff::affine(t, t.constant(std::move(pooled)), "enc.inproj");
  if (cond.valid()) {
    if (t.val(cond).numel() != cfg.h)
      throw ConfigError("encode: conditioning width != encoder width");
    // First-layer output Hadamard-conditioned before any cross-frame
    // mixing, so the product is bilinear in (frame, enrollment) — the form
    // a speaker-selective filter needs.
    x = t.row_bcast_mul(x, cond);
  }
  for (int b = 0; b < cfg.enc_blocks; ++b)
    x = diff::attention_block(t, x, mask, "enc.b" + std::to_string(b));
  return x;
}

Var predict_states(Tape& t, const ModelConfig& cfg, const TokenSequence& tokens) {
  for (int tk : tokens)
    if (tk < 1 || tk >= cfg.k_vocab)
      throw ConfigError("predict: token out of range (blank not allowed in transcripts)");
  Var h = t.zeros({1, cfg.pred_dim});
  std::vector<Var> rows;
  rows.reserve(tokens.size() + 1);
  rows.push_back(h);
  if (!tokens.empty()) {
    Var emb = t.embedding_rows(t.param("pred.embed"), tokens);
    for (size_t u = 0; u < tokens.size(); ++u) {
      Var x = t.slice_rows(emb, static_cast<int>(u), static_cast<int>(u) + 1);
      h = diff::gated_step(t, x, h, "pred.cell");
      rows.push_back(h);
    }
  }
  return t.concat_rows_many(rows);
}

Var joint_lattice_logp(Tape& t, const ModelConfig& cfg, Var enc, Var pred) {
  if (t.val(enc).cols() != cfg.h) throw ConfigError("joint: encoder width mismatch");
  if (t.val(pred).cols() != cfg.pred_dim) throw ConfigError("joint: prediction width mismatch");
  Var eproj = diff::affine(t, enc, "joint.eproj");
  Var pproj = diff::affine(t, pred, "joint.pproj");
  Var combined = t.tanh_op(t.pairwise_row_sum(eproj, pproj));
  return t.log_softmax_rows(diff::affine(t, combined, "joint.out"));
}

Array encode_signal(TransducerModel& m, const Signal& signal) {
  Tape t(&m.ps);
  return t.val(encode(t, m.cfg, model_features(signal, m.cfg).frames));
}

Array predict(TransducerModel& m, const TokenSequence& tokens) {
  Tape t(&m.ps);
  return t.val(predict_states(t, m.cfg, tokens));
}

PosteriorLattice joint_lattice(TransducerModel& m, const Array& enc_states,
                               const Array& pred_states) {
  Tape t(&m.ps);
  Var lp = joint_lattice_logp(t, m.cfg, t.constant(enc_states), t.constant(pred_states));
  PosteriorLattice lat;
  lat.T = enc_states.rows();
  lat.U = pred_states.rows() - 1;
  lat.K = m.cfg.k_vocab;
  lat.log_probs = t.val(lp);
  return lat;
}

PosteriorLattice transducer_lattice(TransducerModel& m, const Signal& signal,
                                    const TokenSequence& transcript) {
  Tape t(&m.ps);
  Var enc = encode(t, m.cfg, model_features(signal, m.cfg).frames);
  Var pred = predict_states(t, m.cfg, transcript);
  Var lp = joint_lattice_logp(t, m.cfg, enc, pred);
  PosteriorLattice lat;
  lat.T = t.val(enc).rows();
  lat.U = static_cast<int>(transcript.size());
  lat.K = m.cfg.k_vocab;
  lat.log_probs = t.val(lp);
  return lat;
}

namespace {

// y = x W + b for a single row x, plain arrays. Accumulation order copies
// the tape path (products summed in ascending i, bias added last) so the
// decoders are bit-identical to training forward passes.
void affine_row(const diff::ParamStore& ps, const std::string& prefix, const double* x, int in,
                double* y, int out) {
  const Array& w = ps.value(prefix + ".w");
  const Array& b = ps.value(prefix + ".b");
  for (int j = 0; j < out; ++j) y[j] = 0.0;
  for (int i = 0; i < in; ++i) {
    double xi = x[i];
    if (xi == 0.0) continue;
    const double* wrow = &w.v[static_cast<int64_t>(i) * out];
    for (int j = 0; j < out; ++j) y[j] += xi * wrow[j];
  }
  for (int j = 0; j < out; ++j) y[j] += b.v[j];
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Array pred_start_state(const ModelConfig& cfg, const diff::ParamStore& ps) {
  (void)ps;
  return Array({1, cfg.pred_dim});
}

Array pred_step(const ModelConfig& cfg, const diff::ParamStore& ps, const Array& h_prev,
                int token) {
  if (token < 1 || token >= cfg.k_vocab) throw ConfigError("pred_step: token out of range");
  int d = cfg.pred_dim;
  const Array& emb = ps.value("pred.embed");
  const double* x = &emb.v[static_cast<int64_t>(token) * d];

  // Mirrors gated_step: z = sigmoid(xWz + hUz + bz), c = tanh(xWc + hUc + bc),
  // h' = z*h + (1-z)*c. Summation order matches the tape ops exactly:
  // (x W + h U) computed as matmul results added elementwise, then bias.
  auto gate = [&](const char* wn, const char* un, const char* bn, std::vector<double>& out) {
    const Array& w = ps.value(std::string("pred.cell.") + wn);
    const Array& u = ps.value(std::string("pred.cell.") + un);
    const Array& b = ps.value(std::string("pred.cell.") + bn);
    std::vector<double> xw(d, 0.0), hu(d, 0.0);
    for (int i = 0; i < d; ++i) {
      double xi = x[i];
      if (xi != 0.0)
        for (int j = 0; j < d; ++j) xw[j] += xi * w.v[static_cast<int64_t>(i) * d + j];
      double hi = h_prev.v[i];
      if (hi != 0.0)
        for (int j = 0; j < d; ++j) hu[j] += hi * u.v[static_cast<int64_t>(i) * d + j];
    }
    out.resize(d);
    for (int j = 0; j < d; ++j) out[j] = (xw[j] + hu[j]) + b.v[j];
  };
  std::vector<double> zpre, cpre;
  gate("wz", "uz", "bz", zpre);
  gate("wc", "uc", "bc", cpre);
  Array h({1, d});
  for (int j = 0; j < d; ++j) {
    double z = sigmoid(zpre[j]);
    double c = std::tanh(cpre[j]);
    h.v[j] = z * h_prev.v[j] + (1.0 - z) * c;
  }
  return h;
}

Array joint_logp_row(const ModelConfig& cfg, const diff::ParamStore& ps, const double* enc_row,
                     const Array& pred_row) {
  int j = cfg.joint_dim, k = cfg.k_vocab;
  std::vector<double> ep(j), pp(j), comb(j);
  affine_row(ps, "joint.eproj", enc_row, cfg.h, ep.data(), j);
  affine_row(ps, "joint.pproj", pred_row.v.data(), cfg.pred_dim, pp.data(), j);
  for (int i = 0; i < j; ++i) comb[i] = std::tanh(ep[i] + pp[i]);
  Array out({k});
  affine_row(ps, "joint.out", comb.data(), j, out.v.data(), k);
  double mx = out.v[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, out.v[i]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) z += std::exp(out.v[i] - mx);
  double lz = mx + std::log(z);
  for (int i = 0; i < k; ++i) out.v[i] -= lz;
  return out;
}

RnntLossResult rnnt_loss(const PosteriorLattice& lattice, const TokenSequence& transcript) {
  Tape t;
  Var lp = t.input(lattice.log_probs);
  Var nll = t.rnnt_nll(lp, lattice.T, lattice.U, transcript);
  t.backward(nll);
  RnntLossResult res;
  res.loss = t.val(nll).v[0];
  res.grad_log_probs = t.grad_of(lp);
  res.grad_probs = Array(lattice.log_probs.shape);
  // Chain rule: d/dp = (d/dlogp) / p.
  for (int64_t i = 0; i < res.grad_probs.numel(); ++i)
    res.grad_probs.v[i] = res.grad_log_probs.v[i] / std::exp(lattice.log_probs.v[i]);
  return res;
}

}  // namespace xd::model
