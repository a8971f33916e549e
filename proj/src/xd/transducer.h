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

#include <cstdint>
#include <string>

#include "xd/features.h"
#include "xd/tape.h"

namespace xd::model {

// Architecture + front-end knobs shared by the single-talker transducer,
// the target-speaker transducer, and the speaker encoder.
struct ModelConfig {
  int window = 32;
  int hop = 32;
  int subsample = 1;

  int h = 32;          // encoder width (= conditioning width)
  int enc_blocks = 2;  // attention blocks in the ASR encoder
  int ff = 64;         // feed-forward inner width
  int pred_dim = 16;   // prediction network width
  int joint_dim = 16;  // joint hidden width
  int k_vocab = 6;     // output classes incl. blank 0
  int spk_blocks = 2;  // speaker encoder depth (TS models)

  bool streaming = false;
  int chunk = 6;    // encoder frames per chunk
  int history = 7;  // encoder frames of attention history

  void validate() const;
};

// Posterior lattice over (time, emitted-count, class). Stored in the log
// domain for numerical stability; probs() materializes the probabilities.
struct PosteriorLattice {
  int T = 0, U = 0, K = 0;
  Array log_probs;  // [T*(U+1), K]

  Array probs() const;
  double log_prob(int t, int u, int k) const {
    return log_probs.v[(static_cast<int64_t>(t) * (U + 1) + u) * K + k];
  }
  double prob(int t, int u, int k) const;
};

// Single-talker transducer. Parameter groups: "enc", "pred", "joint".
struct TransducerModel {
  ModelConfig cfg;
  diff::ParamStore ps;

  void init(uint64_t seed);
};

// Registration helpers shared with the TS assembly.
void add_encoder_params(diff::ParamStore& ps, const ModelConfig& cfg, uint64_t seed);
void add_pred_joint_params(diff::ParamStore& ps, const ModelConfig& cfg, uint64_t seed);

FeatureSequence model_features(const Signal& signal, const ModelConfig& cfg);

// Attention window for streaming: frame t in chunk c = floor(t/chunk) may
// attend to [max(0, c*chunk - history), min(T, (c+1)*chunk) - 1].
AttnMask build_chunk_mask(int T, int chunk, int history);

// Tape forwards. `cond` (optional, invalid Var => absent) is a [h]
// conditioning vector Hadamard-multiplied into the first block's output.
diff::Var encode(diff::Tape& t, const ModelConfig& cfg, const Array& feat_frames,
                 diff::Var cond = {});
diff::Var predict_states(diff::Tape& t, const ModelConfig& cfg, const TokenSequence& tokens);
diff::Var joint_lattice_logp(diff::Tape& t, const ModelConfig& cfg, diff::Var enc,
                             diff::Var pred);

// Whole-model conveniences (no gradients leave the call).
Array encode_signal(TransducerModel& m, const Signal& signal);
Array predict(TransducerModel& m, const TokenSequence& tokens);
PosteriorLattice joint_lattice(TransducerModel& m, const Array& enc_states, const Array& pred_states);
PosteriorLattice transducer_lattice(TransducerModel& m, const Signal& signal,
                                    const TokenSequence& transcript);

// Tape-free forward rows used by the decoders; bit-identical to the tape
// path (asserted in tests).
Array pred_start_state(const ModelConfig& cfg, const diff::ParamStore& ps);
Array pred_step(const ModelConfig& cfg, const diff::ParamStore& ps, const Array& h_prev,
                int token);
Array joint_logp_row(const ModelConfig& cfg, const diff::ParamStore& ps, const double* enc_row,
                     const Array& pred_row);

// Standalone RNNT loss on a finished lattice: negative log-likelihood and
// its analytic gradient, reported against both parameterizations.
struct RnntLossResult {
  double loss = 0.0;
  Array grad_log_probs;  // d loss / d log p
  Array grad_probs;      // d loss / d p
};
RnntLossResult rnnt_loss(const PosteriorLattice& lattice, const TokenSequence& transcript);

}  // namespace xd::model
