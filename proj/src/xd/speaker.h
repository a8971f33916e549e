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

#include "xd/transducer.h"

namespace xd::model {

// Target-speaker transducer: a speaker encoder whose output conditions the
// ASR encoder's first block by Hadamard product, plus the shared
// transducer stack. Parameter groups: "spk", "enc", "pred", "joint".
struct TargetSpeakerModel {
  ModelConfig cfg;
  diff::ParamStore ps;

  void init(uint64_t seed);
};

// Per-frame speaker network, time-averaged, then a linear projection.
// Output width equals the encoder width (the conditioning injection point).
diff::Var embed_speaker_var(diff::Tape& t, const ModelConfig& cfg,
                            const FeatureSequence& enrollment);
Array embed_speaker(TargetSpeakerModel& m, const FeatureSequence& enrollment);

// Full TS forward on a tape: lattice log-probs for (mixture, enrollment,
// transcript). T/U written to the out-params.
diff::Var ts_lattice_logp(diff::Tape& t, const ModelConfig& cfg, const Signal& mixture,
                          const Signal& enrollment, const TokenSequence& transcript, int* T_out,
                          int* U_out);
PosteriorLattice ts_lattice(TargetSpeakerModel& m, const corpus::MixtureRecord& record);

// Encoder states for decoding a TS model on a mixture (conditioning baked
// in). The embedding may be precomputed once per session.
Array ts_encode(TargetSpeakerModel& m, const Signal& mixture, const Array& embedding);

}  // namespace xd::model
