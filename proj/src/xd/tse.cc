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

#include "xd/tse.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "xd/decode.h"
#include "xd/error.h"
#include "xd/nn.h"
#include "xd/threads.h"

namespace xd::tse {

using diff::Tape;
using diff::Var;

void ExtractorConfig::validate() const {
  if (frame < 1) throw ConfigError("tse: frame must be >= 1");
  if (h < 1 || ff < 1) throw ConfigError("tse: widths must be >= 1");
  if (blocks < 1) throw ConfigError("tse: need at least one extraction block");
  if (spk_blocks < 1) throw ConfigError("tse: need at least one speaker block");
}

void ExtractorModel::init(uint64_t seed) {
  cfg.validate();
  // Near-identity input projections keep the first-layer activations on
  // the analysis coordinates, so conditioning and masking start out
  // aligned with them (same rationale as the recognizer's encoders).
  diff::add_affine_eye(ps, "spk.inproj", cfg.frame, cfg.h, 0.05, seed, "spk");
  for (int b = 0; b < cfg.spk_blocks; ++b) {
    diff::add_attention_block(ps, "spk.b" + std::to_string(b), cfg.h, cfg.ff,
                              1.0 / std::sqrt(cfg.h), seed, "spk");
  }
  diff::add_affine_eye(ps, "spk.out", cfg.h, cfg.h, 0.05, seed, "spk");
  diff::add_affine_eye(ps, "ext.inproj", cfg.frame, cfg.h, 0.05, seed, "ext");
  for (int b = 0; b < cfg.blocks; ++b) {
    diff::add_attention_block(ps, "ext.b" + std::to_string(b), cfg.h, cfg.ff,
                              1.0 / std::sqrt(cfg.h), seed, "ext");
  }
  // Small weights start every gate near 1/2, a uniform attenuation that
  // SI-SNR ignores; training only shapes the relative pass-through.
  diff::add_affine(ps, "ext.out", cfg.h, cfg.frame, 1.0 / std::sqrt(cfg.h), seed, "ext");
}

Array frame_signal(const Signal& signal, int frame) {
  if (signal.empty()) throw ConfigError("tse: empty signal");
  int f = (static_cast<int>(signal.size()) + frame - 1) / frame;
  Array out({f, frame});
  std::copy(signal.begin(), signal.end(), out.v.begin());
  return out;
}

namespace {

// The fixed analysis transform: rows are the orthonormal DCT-II basis
// vectors shared with the recognizer front end, so the mask acts on the
// same per-frame coordinates the corpus distributes its content over.
// Analysis is frames * D^T, synthesis is coefficients * D, and the
// orthonormality makes the all-ones mask an exact round trip.
Array analysis_rows(int frame) {
  const std::vector<double>& b = model::dct_basis(frame);
  Array d({frame, frame});
  d.v.assign(b.begin(), b.end());
  return d;
}

}  // namespace

Var tse_embed_var(Tape& t, const ExtractorConfig& cfg, const Signal& enrollment) {
  // Enrollment is available in advance, so the speaker encoder attends
  // over the whole clip even in the causal variant.
  Array frames = frame_signal(enrollment, cfg.frame);
  AttnMask mask = AttnMask::full(frames.shape[0]);
  Var coef = t.matmul_nt(t.constant(frames), t.constant(analysis_rows(cfg.frame)));
  Var x = diff::affine(t, coef, "spk.inproj");
  for (int b = 0; b < cfg.spk_blocks; ++b)
    x = diff::attention_block(t, x, mask, "spk.b" + std::to_string(b));
  Var pooled = t.reshape(t.mean_over_rows(x), {1, cfg.h});
  // Bounded, identity-centered conditioning (see embed_speaker_var).
  Var out = t.reshape(diff::affine(t, pooled, "spk.out"), {cfg.h});
  return t.add_const(t.scale(t.tanh_op(out), 2.0), 1.0);
}

namespace {

// [F, frame] masked frames; cond is the [h] speaker embedding. The
// sigmoid mask multiplies the analysis coefficients, then the synthesis
// matmul returns to the sample domain.
Var masked_frames_var(Tape& t, const ExtractorConfig& cfg, const Array& frames, Var cond) {
  int f = frames.shape[0];
  AttnMask mask = cfg.causal ? AttnMask::causal(f) : AttnMask::full(f);
  Var basis = t.constant(analysis_rows(cfg.frame));
  Var coef = t.matmul_nt(t.constant(frames), basis);
  // Conditioning multiplies the first-layer output (see model::encode).
  Var x = t.row_bcast_mul(diff::affine(t, coef, "ext.inproj"), cond);
  for (int b = 0; b < cfg.blocks; ++b)
    x = diff::attention_block(t, x, mask, "ext.b" + std::to_string(b));
  Var gate = t.sigmoid_op(diff::affine(t, x, "ext.out"));
  return t.matmul(t.mul(gate, coef), basis);
}

}  // namespace

Var tse_estimate_var(Tape& t, const ExtractorConfig& cfg, const Signal& mixture,
                     const Signal& enrollment) {
  if (mixture.empty() || enrollment.empty()) throw ConfigError("tse: empty input");
  Array frames = frame_signal(mixture, cfg.frame);
  Var cond = tse_embed_var(t, cfg, enrollment);
  Var masked = masked_frames_var(t, cfg, frames, cond);
  // Overlap-add with hop == frame is concatenation; trim the tail padding.
  Var flat = t.reshape(masked, {frames.shape[0] * cfg.frame, 1});
  return t.slice_rows(flat, 0, static_cast<int>(mixture.size()));
}

Signal extract_target(ExtractorModel& m, const Signal& mixture, const Signal& enrollment,
                      bool identity_mask) {
  if (mixture.empty() || enrollment.empty()) throw ConfigError("tse: empty input");
  if (identity_mask) {
    // All-ones mask: analysis then synthesis with no gating, i.e. the
    // frame-and-reconstruct round trip of the real path.
    Tape t(&m.ps);
    Array frames = frame_signal(mixture, m.cfg.frame);
    Var basis = t.constant(analysis_rows(m.cfg.frame));
    Var coef = t.matmul_nt(t.constant(frames), basis);
    Var flat = t.reshape(t.matmul(coef, basis), {frames.shape[0] * m.cfg.frame, 1});
    const Array& rec = t.val(t.slice_rows(flat, 0, static_cast<int>(mixture.size())));
    return Signal(rec.v.begin(), rec.v.end());
  }
  Tape t(&m.ps);
  const Array& est = t.val(tse_estimate_var(t, m.cfg, mixture, enrollment));
  return Signal(est.v.begin(), est.v.end());
}

double si_snr(const Signal& estimate, const Signal& reference) {
  if (estimate.size() != reference.size()) throw ConfigError("si_snr: length mismatch");
  if (estimate.empty()) throw ConfigError("si_snr: empty input");
  const double n = static_cast<double>(reference.size());
  double me = std::accumulate(estimate.begin(), estimate.end(), 0.0) / n;
  double mr = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  double er = 0.0, rr = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    er += (estimate[i] - me) * (reference[i] - mr);
    rr += (reference[i] - mr) * (reference[i] - mr);
  }
  if (rr == 0.0) throw ConfigError("si_snr: zero reference");
  double alpha = er / rr;
  double ps = 0.0, pe = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    double s = alpha * (reference[i] - mr);
    double e = (estimate[i] - me) - s;
    ps += s * s;
    pe += e * e;
  }
  if (ps == 0.0) return -60.0;
  if (pe == 0.0) return 60.0;
  return std::clamp(10.0 * std::log10(ps / pe), -60.0, 60.0);
}

Var neg_si_snr_var(Tape& t, Var estimate, const Signal& reference) {
  const Array& est = t.val(estimate);
  if (est.numel() != static_cast<int64_t>(reference.size())) {
    throw ConfigError("si_snr: length mismatch");
  }
  const double n = static_cast<double>(reference.size());
  double mr = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  Array r0(est.shape);
  double rr = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    r0.v[i] = reference[i] - mr;
    rr += r0.v[i] * r0.v[i];
  }
  if (rr == 0.0) throw ConfigError("si_snr: zero reference");
  Var e0 = t.sub_mean_all(estimate);
  Var ref = t.constant(std::move(r0));
  Var alpha = t.scale(t.dot(e0, ref), 1.0 / rr);
  Var starget = t.scale_bs(ref, alpha);
  Var err = t.sub(e0, starget);
  // -10*log10(ps/pe) = (10/ln 10) * (log pe - log ps)
  const double c = 10.0 / std::log(10.0);
  return t.scale(t.sub(t.log_op(t.dot(err, err)), t.log_op(t.dot(starget, starget))), c);
}

ExtractorModel train_extractor(const std::vector<MixtureRecord>& train_set,
                               const std::vector<MixtureRecord>& dev_set,
                               const ExtractorConfig& cfg, const train::TrainConfig& tcfg,
                               TseTrainResult* result) {
  if (train_set.empty()) throw ConfigError("tse: training set is empty");
  tcfg.validate();
  ExtractorModel m;
  m.cfg = cfg;
  m.init(tcfg.seed);
  diff::Sgd opt(tcfg.lr, tcfg.momentum, tcfg.clip);
  const int n = static_cast<int>(train_set.size());
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::mix(tcfg.seed, 0x74736545ull, static_cast<uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
    double epoch_sum = 0.0;
    for (int start = 0; start < n; start += tcfg.batch_size) {
      const int bs = std::min(tcfg.batch_size, n - start);
      std::vector<std::map<std::string, Array>> sinks(bs);
      std::vector<double> losses(bs);
      parallel_for(bs, [&](int64_t i) {
        const MixtureRecord& rec = train_set[order[start + static_cast<int>(i)]];
        Tape t(&m.ps, &sinks[i]);
        Var loss = neg_si_snr_var(t, tse_estimate_var(t, m.cfg, rec.mixture, rec.enrollment),
                                  rec.target_clean);
        losses[i] = t.val(loss).v[0];
        t.backward(loss);
      });
      m.ps.zero_grads();
      double batch_mean = 0.0;
      for (int i = 0; i < bs; ++i) {
        batch_mean += losses[i];
        for (const auto& [name, g] : sinks[i]) axpy_into(m.ps.grad(name), 1.0 / bs, g);
      }
      batch_mean /= bs;
      if (!std::isfinite(batch_mean)) throw NumericError("tse: non-finite batch loss");
      epoch_sum += batch_mean * bs;
      opt.step(m.ps);
    }
    if (result != nullptr) {
      result->epoch_loss.push_back(epoch_sum / n);
      double dev = dev_set.empty() ? 0.0 : mean_si_snr(m, dev_set);
      result->dev_si_snr.push_back(dev);
      double base = 0.0;
      for (const MixtureRecord& rec : dev_set) base += si_snr(rec.mixture, rec.target_clean);
      if (!dev_set.empty()) base /= static_cast<double>(dev_set.size());
      result->dev_improvement.push_back(dev_set.empty() ? 0.0 : dev - base);
    }
  }
  return m;
}

double mean_si_snr(ExtractorModel& m, const std::vector<MixtureRecord>& records) {
  if (records.empty()) throw ConfigError("tse: no records to score");
  std::vector<double> scores(records.size());
  parallel_for(static_cast<int64_t>(records.size()), [&](int64_t i) {
    scores[i] =
        si_snr(extract_target(m, records[i].mixture, records[i].enrollment), records[i].target_clean);
  });
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(records.size());
}

double mean_si_snr_improvement(ExtractorModel& m, const std::vector<MixtureRecord>& records) {
  if (records.empty()) throw ConfigError("tse: no records to score");
  double base = 0.0;
  for (const MixtureRecord& rec : records) base += si_snr(rec.mixture, rec.target_clean);
  base /= static_cast<double>(records.size());
  return mean_si_snr(m, records) - base;
}

Signal cascade_front_end(ExtractorModel* ext, const MixtureRecord& record, FrontEnd mode) {
  switch (mode) {
    case FrontEnd::kIdentity:
      return record.mixture;
    case FrontEnd::kOracle:
      return record.target_clean;
    case FrontEnd::kModel:
      break;
  }
  if (ext == nullptr) throw ConfigError("cascade: extractor required for model front end");
  return extract_target(*ext, record.mixture, record.enrollment);
}

TokenSequence cascade_decode(ExtractorModel* ext, model::TransducerModel& asr,
                             const MixtureRecord& record, int beam, FrontEnd mode) {
  Signal x = cascade_front_end(ext, record, mode);
  return decode::beam_decode(asr, model::encode_signal(asr, x), beam).tokens;
}

TokenSequence cascade_decode_streaming(ExtractorModel* ext, model::TransducerModel& asr,
                                       const MixtureRecord& record, int chunk, int history,
                                       FrontEnd mode) {
  Signal x = cascade_front_end(ext, record, mode);
  return decode::stream_decode(asr, x, chunk, history).tokens;
}

}  // namespace xd::tse
