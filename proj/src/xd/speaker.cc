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

#include "xd/speaker.h"

#include <cmath>

#include "xd/error.h"
#include "xd/nn.h"

namespace xd::model {

using diff::Tape;
using diff::Var;

void TargetSpeakerModel::init(uint64_t seed) {
  cfg.validate();
  // Near-identity speaker head: the pooled enrollment features (which carry
  // the signature directly when the front-end window matches the corpus
  // frame) flow into the conditioning vector unrotated at init.
  diff::add_affine_eye(ps, "spk.inproj", cfg.window, cfg.h, 0.05, seed, "spk");
  for (int b = 0; b < cfg.spk_blocks; ++b)
    diff::add_attention_block(ps, "spk.b" + std::to_string(b), cfg.h, cfg.ff,
                              1.0 / std::sqrt(cfg.h), seed, "spk");
  diff::add_affine_eye(ps, "spk.out", cfg.h, cfg.h, 0.05, seed, "spk");
  add_encoder_params(ps, cfg, seed);
  add_pred_joint_params(ps, cfg, seed);
}

Var embed_speaker_var(Tape& t, const ModelConfig& cfg, const FeatureSequence& enrollment) {
  if (enrollment.frames.numel() == 0 || enrollment.frames.rows() < 1)
    throw ConfigError("embed_speaker: empty enrollment");
  int T = enrollment.frames.rows();
  // The speaker encoder always sees the whole enrollment (it is available
  // "in advance" even in streaming mode), so the mask is full.
  AttnMask mask = AttnMask::full(T);
  Var x = diff::affine(t, t.constant(enrollment.frames), "spk.inproj");
  for (int b = 0; b < cfg.spk_blocks; ++b)
    x = diff::attention_block(t, x, mask, "spk.b" + std::to_string(b));
  Var pooled = t.reshape(t.mean_over_rows(x), {1, cfg.h});
  // Bounded, identity-centered conditioning: 1 + 2*tanh keeps every gate in
  // (-1, 3), so multiplication can attenuate, amplify, or flip a coordinate
  // but can never blow activations up, and a zero-mean head starts as a
  // near-no-op instead of attenuating both signal and gradient.
  Var out = t.reshape(diff::affine(t, pooled, "spk.out"), {cfg.h});
  return t.add_const(t.scale(t.tanh_op(out), 2.0), 1.0);
}

Array embed_speaker(TargetSpeakerModel& m, const FeatureSequence& enrollment) {
  Tape t(&m.ps);
  return t.val(embed_speaker_var(t, m.cfg, enrollment));
}

Var ts_lattice_logp(Tape& t, const ModelConfig& cfg, const Signal& mixture,
                    const Signal& enrollment, const TokenSequence& transcript, int* T_out,
                    int* U_out) {
  Var cond = embed_speaker_var(t, cfg, model_features(enrollment, cfg));
  Var enc = encode(t, cfg, model_features(mixture, cfg).frames, cond);
  Var pred = predict_states(t, cfg, transcript);
  if (T_out) *T_out = t.val(enc).rows();
  if (U_out) *U_out = static_cast<int>(transcript.size());
  return joint_lattice_logp(t, cfg, enc, pred);
}

PosteriorLattice ts_lattice(TargetSpeakerModel& m, const corpus::MixtureRecord& record) {
  Tape t(&m.ps);
  PosteriorLattice lat;
  Var lp = ts_lattice_logp(t, m.cfg, record.mixture, record.enrollment, record.transcript, &lat.T,
                           &lat.U);
  lat.K = m.cfg.k_vocab;
  lat.log_probs = t.val(lp);
  return lat;
}

Array ts_encode(TargetSpeakerModel& m, const Signal& mixture, const Array& embedding) {
  Tape t(&m.ps);
  return t.val(
      encode(t, m.cfg, model_features(mixture, m.cfg).frames, t.constant(embedding)));
}

}  // namespace xd::model
