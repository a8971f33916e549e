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

#include "xd/speaker.h"
#include "xd/transducer.h"

namespace xd::decode {

using model::FeatureSequence;
using model::ModelConfig;
using model::Signal;
using model::TokenSequence;

constexpr int kDefaultBeam = 8;  // beam width used throughout evaluation

struct DecodeResult {
  TokenSequence tokens;
  double log_prob = 0.0;
  bool cap_hit = false;  // the U <= T emission cap suppressed a token
};

// Greedy: argmax at each (t,u); blank advances t, a token advances u; ties
// toward the lowest token id. Emissions capped at U == T.
DecodeResult greedy_decode(const ModelConfig& cfg, const diff::ParamStore& ps, const Array& enc);

// Alignment-length synchronous beam search: hypotheses compared at equal
// t+u, identical token sequences merged by log-sum-exp, ties broken by
// lexicographic token order (which also prefers the shorter sequence).
// beam == 1 reproduces greedy_decode exactly.
DecodeResult beam_decode(const ModelConfig& cfg, const diff::ParamStore& ps, const Array& enc,
                         int beam);

inline DecodeResult greedy_decode(model::TransducerModel& m, const Array& enc) {
  return greedy_decode(m.cfg, m.ps, enc);
}
inline DecodeResult beam_decode(model::TransducerModel& m, const Array& enc, int beam) {
  return beam_decode(m.cfg, m.ps, enc, beam);
}

// Average algorithmic latency in samples: chunk_duration/2 + lookahead,
// with chunk_duration = chunk * subsample * hop and lookahead = window.
double avg_latency_samples(const ModelConfig& cfg);

// Incremental chunked inference. Feature frames are pushed as they arrive;
// once a chunk completes, the encoder runs over the whole received prefix
// under the chunk mask (whose receptive field never crosses the prefix
// end), and greedy decoding continues from the saved (t, u) state. Tokens,
// once emitted, are never retracted.
class StreamSession {
 public:
  // Single-talker model (cfg may override the model's chunk/history).
  StreamSession(model::TransducerModel& m, int chunk, int history);
  // TS model with a precomputed enrollment embedding.
  StreamSession(model::TargetSpeakerModel& m, Array embedding, int chunk, int history);

  // Returns tokens newly emitted by this call.
  std::vector<int> push(const FeatureSequence& frames);
  std::vector<int> finish();

  const TokenSequence& emitted() const { return emitted_; }
  bool finished() const { return finished_; }
  bool cap_hit() const { return cap_hit_; }
  double log_prob() const { return log_prob_; }
  double avg_latency() const { return decode::avg_latency_samples(cfg_); }

 private:
  std::vector<int> advance(bool final_flush);
  std::vector<int> decode_rows(const Array& enc, int t_lo, int t_hi);

  ModelConfig cfg_;  // streaming=true with session chunk/history
  diff::ParamStore* ps_;
  Array cond_;  // numel()==0 => unconditioned
  Array feat_buffer_;  // [n, window]
  TokenSequence emitted_;
  Array pred_h_;
  int enc_done_ = 0;  // encoder frames already decoded
  int u_ = 0;
  double log_prob_ = 0.0;
  bool finished_ = false;
  bool cap_hit_ = false;
};

// Convenience: stream a whole signal through a session (one push + finish).
DecodeResult stream_decode(model::TransducerModel& m, const Signal& signal, int chunk,
                           int history);
DecodeResult stream_decode(model::TargetSpeakerModel& m, const Signal& signal,
                           const Array& embedding, int chunk, int history);

}  // namespace xd::decode
