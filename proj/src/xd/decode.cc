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

#include "xd/decode.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "xd/error.h"

namespace xd::decode {

using model::joint_logp_row;
using model::pred_start_state;
using model::pred_step;

namespace {

int argmax_lowest(const Array& logp) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(logp.numel()); ++k)
    if (logp.v[k] > logp.v[best]) best = k;  // strict: ties keep lowest id
  return best;
}

double lse2(double a, double b) {
  double m = std::max(a, b);
  if (!std::isfinite(m)) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

DecodeResult greedy_decode(const ModelConfig& cfg, const diff::ParamStore& ps, const Array& enc) {
  int T = enc.rows();
  int cap = T;  // at most one non-blank per consumed frame overall
  DecodeResult res;
  Array h = pred_start_state(cfg, ps);
  int t = 0, u = 0;
  while (t < T) {
    Array logp = joint_logp_row(cfg, ps, &enc.v[static_cast<int64_t>(t) * cfg.h], h);
    int k = argmax_lowest(logp);
    if (k != 0 && u >= cap) {
      res.cap_hit = true;
      k = 0;
    }
    res.log_prob += logp.v[k];
    if (k == 0) {
      ++t;
    } else {
      res.tokens.push_back(k);
      h = pred_step(cfg, ps, h, k);
      ++u;
    }
  }
  return res;
}

DecodeResult beam_decode(const ModelConfig& cfg, const diff::ParamStore& ps, const Array& enc,
                         int beam) {
  if (beam < 1) throw ConfigError("beam_decode: beam must be >= 1");
  int T = enc.rows();
  int K = cfg.k_vocab;
  int cap = T;

  struct Hyp {
    TokenSequence toks;
    int t = 0;
    double score = 0.0;
    std::shared_ptr<Array> h;      // pred state for toks minus pending
    int pending = -1;              // token whose pred_step is deferred
    bool cap_hit = false;
  };
  auto state_of = [&](Hyp& hyp) -> const Array& {
    if (hyp.pending >= 0) {
      hyp.h = std::make_shared<Array>(pred_step(cfg, ps, *hyp.h, hyp.pending));
      hyp.pending = -1;
    }
    return *hyp.h;
  };

  std::vector<Hyp> b_set;
  {
    Hyp h0;
    h0.h = std::make_shared<Array>(pred_start_state(cfg, ps));
    b_set.push_back(std::move(h0));
  }
  // Finals: merged score per token sequence (log-sum-exp over alignments).
  std::map<TokenSequence, std::pair<double, bool>> finals;

  for (int n = 0; n <= T + cap && !b_set.empty(); ++n) {
    // Merge same-sequence hypotheses (same n => same u => same t).
    std::map<TokenSequence, Hyp> merged;
    for (auto& hyp : b_set) {
      if (hyp.t == T) {
        auto it = finals.find(hyp.toks);
        if (it == finals.end())
          finals.emplace(hyp.toks, std::make_pair(hyp.score, hyp.cap_hit));
        else {
          it->second.first = lse2(it->second.first, hyp.score);
          it->second.second = it->second.second || hyp.cap_hit;
        }
        continue;
      }
      auto it = merged.find(hyp.toks);
      if (it == merged.end()) {
        merged.emplace(hyp.toks, std::move(hyp));
      } else {
        it->second.score = lse2(it->second.score, hyp.score);
        it->second.cap_hit = it->second.cap_hit || hyp.cap_hit;
        // Prefer a materialized pred state over a pending one.
        if (it->second.pending >= 0 && hyp.pending < 0) {
          it->second.h = hyp.h;
          it->second.pending = -1;
        }
      }
    }
    if (merged.empty()) break;

    std::vector<Hyp> expansions;
    for (auto& [toks, hyp] : merged) {
      const Array& state = state_of(hyp);
      Array logp = joint_logp_row(cfg, ps, &enc.v[static_cast<int64_t>(hyp.t) * cfg.h], state);
      Hyp blank_ext;
      blank_ext.toks = hyp.toks;
      blank_ext.t = hyp.t + 1;
      blank_ext.score = hyp.score + logp.v[0];
      blank_ext.h = hyp.h;
      blank_ext.cap_hit = hyp.cap_hit;
      expansions.push_back(std::move(blank_ext));
      if (static_cast<int>(hyp.toks.size()) < cap) {
        for (int k = 1; k < K; ++k) {
          Hyp ext;
          ext.toks = hyp.toks;
          ext.toks.push_back(k);
          ext.t = hyp.t;
          ext.score = hyp.score + logp.v[k];
          ext.h = hyp.h;
          ext.pending = k;
          ext.cap_hit = hyp.cap_hit;
          expansions.push_back(std::move(ext));
        }
      } else {
        expansions.back().cap_hit = true;  // cap suppressed token expansions
      }
    }

    std::stable_sort(expansions.begin(), expansions.end(), [](const Hyp& a, const Hyp& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.toks < b.toks;  // lexicographic; prefix (shorter) first
    });
    if (static_cast<int>(expansions.size()) > beam) expansions.resize(beam);
    b_set = std::move(expansions);
  }

  if (finals.empty()) throw NumericError("beam_decode: no final hypothesis");
  DecodeResult res;
  bool first = true;
  for (const auto& [toks, sc] : finals) {
    if (first || sc.first > res.log_prob) {
      res.tokens = toks;
      res.log_prob = sc.first;
      res.cap_hit = sc.second;
      first = false;
    }
    // map iterates in lexicographic order, so on ties the earlier
    // (lexicographically smaller) sequence is kept by the strict '>'.
  }
  return res;
}

double avg_latency_samples(const ModelConfig& cfg) {
  return cfg.chunk * cfg.subsample * cfg.hop / 2.0 + cfg.window;
}

StreamSession::StreamSession(model::TransducerModel& m, int chunk, int history)
    : cfg_(m.cfg), ps_(&m.ps) {
  cfg_.streaming = true;
  cfg_.chunk = chunk;
  cfg_.history = history;
  cfg_.validate();
  feat_buffer_ = Array({0, cfg_.window});
  pred_h_ = pred_start_state(cfg_, *ps_);
}

StreamSession::StreamSession(model::TargetSpeakerModel& m, Array embedding, int chunk, int history)
    : cfg_(m.cfg), ps_(&m.ps), cond_(std::move(embedding)) {
  cfg_.streaming = true;
  cfg_.chunk = chunk;
  cfg_.history = history;
  cfg_.validate();
  if (cond_.numel() != cfg_.h)
    throw ConfigError("StreamSession: embedding width != encoder width");
  feat_buffer_ = Array({0, cfg_.window});
  pred_h_ = pred_start_state(cfg_, *ps_);
}

std::vector<int> StreamSession::push(const FeatureSequence& frames) {
  if (finished_) throw ConfigError("StreamSession: push after finish");
  if (frames.frames.numel() > 0) {
    if (frames.frames.cols() != cfg_.window)
      throw ConfigError("StreamSession: frame width != window");
    Array merged({feat_buffer_.rows() + frames.frames.rows(), cfg_.window});
    std::copy(feat_buffer_.v.begin(), feat_buffer_.v.end(), merged.v.begin());
    std::copy(frames.frames.v.begin(), frames.frames.v.end(),
              merged.v.begin() + feat_buffer_.numel());
    feat_buffer_ = std::move(merged);
  }
  return advance(false);
}

std::vector<int> StreamSession::finish() {
  if (finished_) throw ConfigError("StreamSession: finish called twice");
  std::vector<int> out = advance(true);
  finished_ = true;
  return out;
}

std::vector<int> StreamSession::advance(bool final_flush) {
  std::vector<int> newly;
  for (;;) {
    // Encoder frames currently determined by the buffer: only complete
    // subsampling groups before the flush (a partial pool's value would
    // still change with more input).
    int full_groups = feat_buffer_.rows() / cfg_.subsample;
    int avail = final_flush ? (feat_buffer_.rows() + cfg_.subsample - 1) / cfg_.subsample
                            : full_groups;
    int target = enc_done_ + cfg_.chunk;  // next chunk boundary
    int t_hi;
    if (avail >= target) {
      t_hi = target;
    } else if (final_flush && avail > enc_done_) {
      t_hi = avail;  // final partial chunk
    } else {
      break;
    }
    int feat_rows = std::min(feat_buffer_.rows(), t_hi * cfg_.subsample);
    Array prefix({feat_rows, cfg_.window});
    std::copy(feat_buffer_.v.begin(),
              feat_buffer_.v.begin() + static_cast<int64_t>(feat_rows) * cfg_.window,
              prefix.v.begin());
    diff::Tape tape(ps_);
    diff::Var cond{};
    if (cond_.numel() > 0) cond = tape.constant(cond_);
    Array enc = tape.val(model::encode(tape, cfg_, prefix, cond));
    std::vector<int> emitted = decode_rows(enc, enc_done_, t_hi);
    newly.insert(newly.end(), emitted.begin(), emitted.end());
    enc_done_ = t_hi;
    if (final_flush && avail <= t_hi) break;
  }
  return newly;
}

std::vector<int> StreamSession::decode_rows(const Array& enc, int t_lo, int t_hi) {
  std::vector<int> newly;
  int t = t_lo;
  while (t < t_hi) {
    Array logp = joint_logp_row(cfg_, *ps_, &enc.v[static_cast<int64_t>(t) * cfg_.h], pred_h_);
    int k = argmax_lowest(logp);
    // Incremental emission cap: at frame t, at most t+1 tokens total, so
    // U <= T holds at the end and the rule is independent of how much
    // future audio has arrived.
    if (k != 0 && u_ > t) {
      cap_hit_ = true;
      k = 0;
    }
    log_prob_ += logp.v[k];
    if (k == 0) {
      ++t;
    } else {
      emitted_.push_back(k);
      newly.push_back(k);
      pred_h_ = pred_step(cfg_, *ps_, pred_h_, k);
      ++u_;
    }
  }
  return newly;
}

DecodeResult stream_decode(model::TransducerModel& m, const Signal& signal, int chunk,
                           int history) {
  StreamSession s(m, chunk, history);
  s.push(model::model_features(signal, m.cfg));
  s.finish();
  DecodeResult res;
  res.tokens = s.emitted();
  res.log_prob = s.log_prob();
  res.cap_hit = s.cap_hit();
  return res;
}

DecodeResult stream_decode(model::TargetSpeakerModel& m, const Signal& signal,
                           const Array& embedding, int chunk, int history) {
  StreamSession s(m, embedding, chunk, history);
  s.push(model::model_features(signal, m.cfg));
  s.finish();
  DecodeResult res;
  res.tokens = s.emitted();
  res.log_prob = s.log_prob();
  res.cap_hit = s.cap_hit();
  return res;
}

}  // namespace xd::decode
