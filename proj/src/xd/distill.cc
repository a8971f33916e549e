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

#include "xd/distill.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "xd/decode.h"
#include "xd/error.h"
#include "xd/eval.h"
#include "xd/threads.h"

namespace xd::train {

KdLossResult kd_loss(const PosteriorLattice& teacher, const PosteriorLattice& student) {
  if (teacher.T != student.T || teacher.U != student.U || teacher.K != student.K) {
    std::ostringstream msg;
    msg << "kd_loss: lattice shape mismatch, teacher " << teacher.T << "x" << teacher.U + 1 << "x"
        << teacher.K << " vs student " << student.T << "x" << student.U + 1 << "x" << student.K;
    throw ConfigError(msg.str());
  }
  Array tp = teacher.probs();
  KdLossResult r;
  r.grad_log_probs = Array(student.log_probs.shape);
  r.grad_probs = Array(student.log_probs.shape);
  double loss = 0.0;
  for (int64_t i = 0; i < tp.numel(); ++i) {
    double t = tp.v[i];
    double slog = student.log_probs.v[i];
    loss -= t * slog;
    r.grad_log_probs.v[i] = -t;
    r.grad_probs.v[i] = -t / std::exp(slog);
  }
  r.loss = loss;
  return r;
}

diff::Var kd_loss_var(diff::Tape& tape, diff::Var student_log_probs, const Array& teacher_probs) {
  return tape.scale(tape.weighted_sum(student_log_probs, teacher_probs), -1.0);
}

diff::Var multitask_loss_var(diff::Tape& tape, const MixtureRecord& record,
                             const ModelConfig& cfg, TransducerModel* teacher, double lambda,
                             MultitaskParts* parts) {
  if (lambda > 0.0 && teacher == nullptr) {
    throw ConfigError("multitask_loss: lambda > 0 requires a teacher");
  }
  if (teacher != nullptr && !teacher->ps.all_frozen()) {
    throw ConfigError("multitask_loss: teacher must be frozen");
  }
  PosteriorLattice tl;
  const PosteriorLattice* tlp = nullptr;
  if (lambda > 0.0) {
    tl = model::transducer_lattice(*teacher, record.target_plus_noise, record.transcript);
    tlp = &tl;
  }
  return multitask_loss_var(tape, record, cfg, tlp, lambda, parts);
}

diff::Var multitask_loss_var(diff::Tape& tape, const MixtureRecord& record,
                             const ModelConfig& cfg, const PosteriorLattice* teacher_lattice,
                             double lambda, MultitaskParts* parts) {
  if (lambda < 0.0) throw ConfigError("multitask_loss: lambda must be >= 0");
  int T = 0, U = 0;
  diff::Var logp = model::ts_lattice_logp(tape, cfg, record.mixture, record.enrollment,
                                          record.transcript, &T, &U);
  diff::Var loss = tape.rnnt_nll(logp, T, U, record.transcript);
  MultitaskParts p;
  p.rnnt = tape.val(loss).v[0];
  if (lambda > 0.0) {
    if (teacher_lattice == nullptr) {
      throw ConfigError("multitask_loss: lambda > 0 requires a teacher");
    }
    const PosteriorLattice& tl = *teacher_lattice;
    if (tl.T != T || tl.U != U || tl.K != cfg.k_vocab) {
      std::ostringstream msg;
      msg << "multitask_loss: teacher lattice " << tl.T << "x" << tl.U + 1 << "x" << tl.K
          << " does not match student " << T << "x" << U + 1 << "x" << cfg.k_vocab
          << " (front-end mismatch)";
      throw ConfigError(msg.str());
    }
    diff::Var kd = kd_loss_var(tape, logp, tl.probs());
    p.kd = tape.val(kd).v[0];
    loss = tape.add(loss, tape.scale(kd, lambda));
  }
  p.total = tape.val(loss).v[0];
  if (parts != nullptr) *parts = p;
  return loss;
}

MultitaskParts multitask_loss(const MixtureRecord& record, TargetSpeakerModel& student,
                              TransducerModel* teacher, double lambda,
                              std::map<std::string, Array>* sink) {
  diff::Tape tape(&student.ps, sink);
  MultitaskParts parts;
  diff::Var loss = multitask_loss_var(tape, record, student.cfg, teacher, lambda, &parts);
  tape.backward(loss);
  return parts;
}

std::vector<std::string> copy_param_values(const diff::ParamStore& src, diff::ParamStore& dst) {
  std::vector<std::string> copied;
  for (const std::string& n : dst.names()) {
    if (!src.has(n)) continue;
    const Array& s = src.value(n);
    Array& d = dst.value(n);
    if (s.shape != d.shape) {
      throw ConfigError("copy_param_values: shape mismatch for \"" + n + "\"");
    }
    d.v = s.v;
    copied.push_back(n);
  }
  return copied;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0, 1)");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
}

std::string TrainResult::log_csv() const {
  std::ostringstream out;
  out << "epoch,split,rnnt_loss,kd_loss,total,ter\n";
  char line[192];
  for (const EpochStat& s : history) {
    std::snprintf(line, sizeof line, "%d,%s,%.6f,%.6f,%.6f,%.4f\n", s.epoch, s.split.c_str(),
                  s.rnnt_loss, s.kd_loss, s.total, s.ter);
    out << line;
  }
  return out.str();
}

namespace {

constexpr uint64_t kTagShuffle = 0x45504f43ull;  // epoch permutation stream

std::vector<int> shuffled_indices(int n, uint64_t seed, int epoch) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(Rng::mix(seed, kTagShuffle, static_cast<uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i) {
    int j = rng.uniform_int(0, i);
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

// Per-model callbacks; the epoch/batch mechanics are shared.
struct Hooks {
  std::function<MultitaskParts(const MixtureRecord&, std::map<std::string, Array>*)> grad;
  std::function<MultitaskParts(const MixtureRecord&)> eval;  // forward only
  std::function<TokenSequence(const MixtureRecord&)> decode;
};

double pooled_ter(const std::vector<MixtureRecord>& records, const Hooks& hooks) {
  std::vector<TokenSequence> hyps(records.size());
  parallel_for(static_cast<int64_t>(records.size()),
               [&](int64_t i) { hyps[i] = hooks.decode(records[i]); });
  int64_t edits = 0, ref_tokens = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    edits += eval::edit_distance(hyps[i], records[i].transcript).distance;
    ref_tokens += static_cast<int64_t>(records[i].transcript.size());
  }
  return ref_tokens == 0 ? 0.0 : 100.0 * static_cast<double>(edits) / ref_tokens;
}

EpochStat split_stat(int epoch, const std::string& split,
                     const std::vector<MixtureRecord>& records, const Hooks& hooks) {
  std::vector<MultitaskParts> parts(records.size());
  parallel_for(static_cast<int64_t>(records.size()),
               [&](int64_t i) { parts[i] = hooks.eval(records[i]); });
  EpochStat s;
  s.epoch = epoch;
  s.split = split;
  for (const MultitaskParts& p : parts) {
    s.rnnt_loss += p.rnnt;
    s.kd_loss += p.kd;
    s.total += p.total;
  }
  if (!records.empty()) {
    s.rnnt_loss /= static_cast<double>(records.size());
    s.kd_loss /= static_cast<double>(records.size());
    s.total /= static_cast<double>(records.size());
  }
  s.ter = pooled_ter(records, hooks);
  return s;
}

void run_training(const std::vector<MixtureRecord>& train_set,
                  const std::vector<MixtureRecord>& dev_set, diff::ParamStore& ps,
                  const TrainConfig& tcfg, const Hooks& hooks, TrainResult* result) {
  if (train_set.empty()) throw ConfigError("train: training set is empty");
  tcfg.validate();
  diff::Sgd opt(tcfg.lr, tcfg.momentum, tcfg.clip);
  const int n = static_cast<int>(train_set.size());
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    std::vector<int> order = shuffled_indices(n, tcfg.seed, epoch);
    double sum_rnnt = 0.0, sum_kd = 0.0, sum_total = 0.0;
    for (int start = 0; start < n; start += tcfg.batch_size) {
      const int bs = std::min(tcfg.batch_size, n - start);
      std::vector<std::map<std::string, Array>> sinks(bs);
      std::vector<MultitaskParts> parts(bs);
      parallel_for(bs, [&](int64_t i) {
        parts[i] = hooks.grad(train_set[order[start + static_cast<int>(i)]], &sinks[i]);
      });
      ps.zero_grads();
      double batch_total = 0.0;
      // Merge in item order: gradients are independent of the thread count.
      for (int i = 0; i < bs; ++i) {
        batch_total += parts[i].total;
        sum_rnnt += parts[i].rnnt;
        sum_kd += parts[i].kd;
        sum_total += parts[i].total;
        for (const auto& [name, g] : sinks[i]) axpy_into(ps.grad(name), 1.0 / bs, g);
      }
      batch_total /= bs;
      if (!std::isfinite(batch_total)) throw NumericError("train: non-finite batch loss");
      if (result != nullptr) result->step_totals.push_back(batch_total);
      opt.step(ps);
    }
    if (result != nullptr) {
      EpochStat tr;
      tr.epoch = epoch;
      tr.split = "train";
      tr.rnnt_loss = sum_rnnt / n;
      tr.kd_loss = sum_kd / n;
      tr.total = sum_total / n;
      tr.ter = pooled_ter(train_set, hooks);
      result->history.push_back(tr);
      result->history.push_back(split_stat(epoch, "dev", dev_set, hooks));
    }
  }
}

}  // namespace

TransducerModel train_teacher(const std::vector<MixtureRecord>& train_set,
                              const std::vector<MixtureRecord>& dev_set,
                              const ModelConfig& mcfg, const TrainConfig& tcfg,
                              TrainResult* result) {
  mcfg.validate();
  TransducerModel m;
  m.cfg = mcfg;
  m.init(tcfg.seed);
  auto forward = [&](diff::Tape& tape, const MixtureRecord& rec, MultitaskParts* p) {
    model::FeatureSequence f = model::model_features(rec.target_plus_noise, m.cfg);
    diff::Var enc = model::encode(tape, m.cfg, f.frames);
    diff::Var pred = model::predict_states(tape, m.cfg, rec.transcript);
    diff::Var logp = model::joint_lattice_logp(tape, m.cfg, enc, pred);
    int T = tape.val(enc).shape[0];
    diff::Var loss = tape.rnnt_nll(logp, T, static_cast<int>(rec.transcript.size()),
                                   rec.transcript);
    p->rnnt = p->total = tape.val(loss).v[0];
    return loss;
  };
  Hooks hooks;
  hooks.grad = [&](const MixtureRecord& rec, std::map<std::string, Array>* sink) {
    diff::Tape tape(&m.ps, sink);
    MultitaskParts p;
    tape.backward(forward(tape, rec, &p));
    return p;
  };
  hooks.eval = [&](const MixtureRecord& rec) {
    diff::Tape tape(&m.ps);
    MultitaskParts p;
    forward(tape, rec, &p);
    return p;
  };
  hooks.decode = [&](const MixtureRecord& rec) {
    return decode::greedy_decode(m, model::encode_signal(m, rec.target_plus_noise)).tokens;
  };
  run_training(train_set, dev_set, m.ps, tcfg, hooks, result);
  return m;
}

TargetSpeakerModel train_student(const std::vector<MixtureRecord>& train_set,
                                 const std::vector<MixtureRecord>& dev_set,
                                 const ModelConfig& mcfg, const TrainConfig& tcfg,
                                 TransducerModel* teacher, const diff::ParamStore* init_values,
                                 TrainResult* result) {
  mcfg.validate();
  tcfg.validate();
  if (tcfg.lambda > 0.0 && teacher == nullptr) {
    throw ConfigError("train_student: lambda > 0 requires a teacher");
  }
  if (teacher != nullptr && !teacher->ps.all_frozen()) {
    throw ConfigError("train_student: teacher must be frozen");
  }
  TargetSpeakerModel m;
  m.cfg = mcfg;
  m.init(tcfg.seed);
  if (init_values != nullptr && copy_param_values(*init_values, m.ps).empty()) {
    throw ConfigError("train_student: init checkpoint shares no parameters with the student");
  }
  // lambda == 0 never touches the teacher, reproducing a KD-free trainer.
  TransducerModel* t = tcfg.lambda > 0.0 ? teacher : nullptr;
  // The teacher is frozen, so each record's lattice is a constant of the
  // run; computing it once removes a full teacher forward from every step.
  std::unordered_map<const MixtureRecord*, PosteriorLattice> tcache;
  if (t != nullptr) {
    auto cache_split = [&](const std::vector<MixtureRecord>& recs) {
      std::vector<PosteriorLattice> ls(recs.size());
      parallel_for(static_cast<int64_t>(recs.size()), [&](int64_t i) {
        ls[i] = model::transducer_lattice(*t, recs[i].target_plus_noise, recs[i].transcript);
      });
      for (size_t i = 0; i < recs.size(); ++i) tcache.emplace(&recs[i], std::move(ls[i]));
    };
    cache_split(train_set);
    cache_split(dev_set);
  }
  auto lattice_of = [&](const MixtureRecord& rec) -> const PosteriorLattice* {
    return t == nullptr ? nullptr : &tcache.at(&rec);
  };
  Hooks hooks;
  hooks.grad = [&](const MixtureRecord& rec, std::map<std::string, Array>* sink) {
    diff::Tape tape(&m.ps, sink);
    MultitaskParts p;
    tape.backward(multitask_loss_var(tape, rec, m.cfg, lattice_of(rec), tcfg.lambda, &p));
    return p;
  };
  hooks.eval = [&](const MixtureRecord& rec) {
    diff::Tape tape(&m.ps);
    MultitaskParts p;
    multitask_loss_var(tape, rec, m.cfg, lattice_of(rec), tcfg.lambda, &p);
    return p;
  };
  hooks.decode = [&](const MixtureRecord& rec) {
    Array emb = model::embed_speaker(m, model::model_features(rec.enrollment, m.cfg));
    return decode::greedy_decode(m.cfg, m.ps, model::ts_encode(m, rec.mixture, emb)).tokens;
  };
  run_training(train_set, dev_set, m.ps, tcfg, hooks, result);
  return m;
}

}  // namespace xd::train
