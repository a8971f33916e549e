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
#include <map>
#include <string>
#include <vector>

#include "xd/corpus.h"
#include "xd/speaker.h"
#include "xd/transducer.h"

namespace xd::train {

using corpus::MixtureRecord;
using model::ModelConfig;
using model::PosteriorLattice;
using model::TargetSpeakerModel;
using model::TokenSequence;
using model::TransducerModel;

// Frame-level knowledge distillation: cross-entropy of the student lattice
// under the teacher's posterior, summed over the full T x (U+1) x K grid
// (blank class and all label rows included; temperature fixed at 1).
struct KdLossResult {
  double loss = 0.0;
  Array grad_log_probs;  // d loss / d log student = -teacher
  Array grad_probs;      // d loss / d student   = -teacher / student
};
KdLossResult kd_loss(const PosteriorLattice& teacher, const PosteriorLattice& student);

// Tape node for the same quantity. `teacher_probs` enters as constant data,
// so backward touches only whatever feeds the student log-probs.
diff::Var kd_loss_var(diff::Tape& tape, diff::Var student_log_probs, const Array& teacher_probs);

struct MultitaskParts {
  double rnnt = 0.0;
  double kd = 0.0;
  double total = 0.0;  // rnnt + lambda * kd
};

// L_RNNT + lambda * L_KD for one record, built on `tape` (which must carry
// the student store). The teacher consumes record.target_plus_noise — the
// same noise realization that sits inside the mixture — while the student
// consumes (mixture, enrollment). lambda == 0 skips the teacher entirely,
// so the graph degenerates to the plain transducer loss bit for bit.
diff::Var multitask_loss_var(diff::Tape& tape, const MixtureRecord& record,
                             const ModelConfig& cfg, TransducerModel* teacher, double lambda,
                             MultitaskParts* parts = nullptr);

// Same loss with a precomputed teacher lattice. The teacher is frozen, so
// its lattice per record never changes; trainers compute it once and reuse
// it every epoch. `teacher_lattice` may be null only when lambda == 0.
diff::Var multitask_loss_var(diff::Tape& tape, const MixtureRecord& record,
                             const ModelConfig& cfg, const PosteriorLattice* teacher_lattice,
                             double lambda, MultitaskParts* parts = nullptr);

// Forward + backward on a private tape; gradients land in the student
// store, or in `sink` when given (batch items on worker threads use
// private sinks merged in item order).
MultitaskParts multitask_loss(const MixtureRecord& record, TargetSpeakerModel& student,
                              TransducerModel* teacher, double lambda,
                              std::map<std::string, Array>* sink = nullptr);

// Copies every parameter whose name exists on both sides and returns the
// copied names (each exactly once); a shared name with a different shape
// is an error naming the offender. Destination-only names keep their
// values ("streaming-only state starts fresh").
std::vector<std::string> copy_param_values(const diff::ParamStore& src, diff::ParamStore& dst);

// Shared trainer knobs. `lambda` only matters for student runs.
struct TrainConfig {
  int epochs = 10;
  double lr = 0.08;
  double momentum = 0.9;
  double clip = 5.0;  // global grad-norm clip; <= 0 disables
  int batch_size = 8;
  uint64_t seed = 1;
  double lambda = 0.0;

  void validate() const;
};

struct EpochStat {
  int epoch = 0;
  std::string split;  // "train" or "dev"
  double rnnt_loss = 0.0;
  double kd_loss = 0.0;
  double total = 0.0;
  double ter = 0.0;  // greedy-decode token error rate, percent
};

struct TrainResult {
  std::vector<EpochStat> history;   // two rows per epoch: train then dev
  std::vector<double> step_totals;  // batch-mean loss per optimizer step

  // Header plus one `epoch,split,rnnt_loss,kd_loss,total,ter` line per row.
  std::string log_csv() const;
};

// Teacher pretraining: plain transducer loss on (target_plus_noise,
// transcript) pairs; the mixtures are never seen.
TransducerModel train_teacher(const std::vector<MixtureRecord>& train_set,
                              const std::vector<MixtureRecord>& dev_set,
                              const ModelConfig& mcfg, const TrainConfig& tcfg,
                              TrainResult* result = nullptr);

// Student training on mixtures with the multi-task loss. `teacher` may be
// null only when lambda == 0; when given it must be frozen. `init_values`,
// when given, seeds the student from a previously trained store (the
// streaming students start from their offline counterparts).
TargetSpeakerModel train_student(const std::vector<MixtureRecord>& train_set,
                                 const std::vector<MixtureRecord>& dev_set,
                                 const ModelConfig& mcfg, const TrainConfig& tcfg,
                                 TransducerModel* teacher,
                                 const diff::ParamStore* init_values = nullptr,
                                 TrainResult* result = nullptr);

}  // namespace xd::train
