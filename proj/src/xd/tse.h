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
#include <vector>

#include "xd/corpus.h"
#include "xd/distill.h"
#include "xd/transducer.h"

namespace xd::tse {

using corpus::MixtureRecord;
using corpus::Signal;
using model::TokenSequence;

// Target-speaker extraction front end for the cascade baseline: the
// mixture is cut into rectangular non-overlapping frames, each frame is
// analyzed with the fixed orthonormal DCT shared with the recognizer
// front end, a mask network (whose first-block output is
// Hadamard-multiplied by the speaker embedding) predicts a per-coefficient
// sigmoid mask, and the masked frames are synthesized back and trimmed to
// the input length. The causal variant restricts frame attention to the
// past, so its algorithmic latency is one frame window.
struct ExtractorConfig {
  int frame = 32;     // rectangular framing, hop == frame
  int h = 32;         // block width (= conditioning width)
  int blocks = 2;     // extraction attention blocks
  int ff = 64;        // feed-forward inner width
  int spk_blocks = 2; // speaker encoder depth
  bool causal = false;

  void validate() const;
};

// Parameter groups: "spk" (speaker encoder) and "ext" (extraction network).
struct ExtractorModel {
  ExtractorConfig cfg;
  diff::ParamStore ps;

  void init(uint64_t seed);
};

// [ceil(len/frame), frame] rectangular frames, zero-padded at the tail.
Array frame_signal(const Signal& signal, int frame);

// Tape forwards shared by extraction and training.
diff::Var tse_embed_var(diff::Tape& t, const ExtractorConfig& cfg, const Signal& enrollment);
diff::Var tse_estimate_var(diff::Tape& t, const ExtractorConfig& cfg, const Signal& mixture,
                           const Signal& enrollment);  // [len, 1]

// Masked extraction. `identity_mask` is a test hook that forces the mask
// to all-ones, reducing the call to frame-and-reconstruct.
Signal extract_target(ExtractorModel& m, const Signal& mixture, const Signal& enrollment,
                      bool identity_mask = false);

// Scale-invariant source-to-noise ratio in dB: project the (zero-meaned)
// estimate onto the reference, compare projected power to residual power.
// Capped at +60 dB (zero residual) and floored at -60 dB (zero projection).
double si_snr(const Signal& estimate, const Signal& reference);

// Tape node for -si_snr (the training objective), without the cap: a zero
// residual or zero projection raises a numeric error instead.
diff::Var neg_si_snr_var(diff::Tape& t, diff::Var estimate, const Signal& reference);

struct TseTrainResult {
  std::vector<double> epoch_loss;       // mean -SI-SNR over train, per epoch
  std::vector<double> dev_si_snr;       // mean SI-SNR of the extract on dev
  std::vector<double> dev_improvement;  // dev_si_snr minus unprocessed-mixture SI-SNR
};

// Maximizes SI-SNR of extract_target(mixture, enrollment) against
// target_clean. Offline and causal variants share this code path; no joint
// training with the recognizer. `tcfg.lambda` is ignored.
ExtractorModel train_extractor(const std::vector<MixtureRecord>& train_set,
                               const std::vector<MixtureRecord>& dev_set,
                               const ExtractorConfig& cfg, const train::TrainConfig& tcfg,
                               TseTrainResult* result = nullptr);

// Mean SI-SNR of the extracted estimates against target_clean, and the
// improvement over feeding the raw mixture.
double mean_si_snr(ExtractorModel& m, const std::vector<MixtureRecord>& records);
double mean_si_snr_improvement(ExtractorModel& m, const std::vector<MixtureRecord>& records);

// Cascade front ends: the trained extractor, plus the identity (raw
// mixture) and oracle (target_clean) test hooks.
enum class FrontEnd { kModel, kIdentity, kOracle };
Signal cascade_front_end(ExtractorModel* ext, const MixtureRecord& record, FrontEnd mode);

// decode(extract(mixture)) through the shared decoders. `ext` may be null
// for the identity/oracle modes.
TokenSequence cascade_decode(ExtractorModel* ext, model::TransducerModel& asr,
                             const MixtureRecord& record, int beam,
                             FrontEnd mode = FrontEnd::kModel);
TokenSequence cascade_decode_streaming(ExtractorModel* ext, model::TransducerModel& asr,
                                       const MixtureRecord& record, int chunk, int history,
                                       FrontEnd mode = FrontEnd::kModel);

}  // namespace xd::tse
