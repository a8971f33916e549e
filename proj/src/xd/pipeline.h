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

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "xd/config.h"
#include "xd/eval.h"

namespace xd::pipeline {

// Experiment grid, named after the paper-analog system rows:
//   BO1 / BS1  cascade: extractor -> single-talker transducer
//   BO2 / BS2  integrated TS transducer, no distillation (lambda = 0)
//   POn / PSn  distilled students, lambda = lambda_grid[n-1]
// (B* = baseline, P* = proposed; *O* = offline, *S* = streaming.)
struct SystemSpec {
  std::string id;
  bool cascade = false;
  bool streaming = false;
  double lambda = 0.0;  // students only
};
std::vector<SystemSpec> system_grid(const config::ExperimentConfig& cfg);

// Artifact layout under outdir: config.txt, table.txt, results.json, and a
// seed<N>/ directory per seed holding corpus/, <stage>.ckpt, <stage>.log,
// and scores_<SYSTEM>.csv.
struct SeedPaths {
  std::string dir;
  std::string corpus_dir;

  std::string ckpt(const std::string& stage) const { return dir + "/" + stage + ".ckpt"; }
  std::string log(const std::string& stage) const { return dir + "/" + stage + ".log"; }
  std::string scores(const std::string& system) const {
    return dir + "/scores_" + system + ".csv";
  }
};
SeedPaths seed_paths(const std::string& outdir, uint64_t seed);

std::string hash_hex(uint64_t h);

// Loads a dataset saved by the pipeline (or the corpus subcommand) and
// verifies its (config hash, seed) stamp. A missing or mismatched corpus
// is reported with the calling step's name.
corpus::Dataset load_stamped_corpus(const config::ExperimentConfig& cfg, uint64_t seed,
                                    const std::string& dir, const std::string& step);

// Copies every parameter whose name and shape exist on both sides (here:
// all of them); a shared name with a different shape is an error naming
// the offender. Returns the copied-name manifest, each name exactly once.
struct InitManifest {
  std::vector<std::string> copied;
};
InitManifest init_streaming_from_offline(const diff::ParamStore& offline,
                                         diff::ParamStore& streaming);

// Per-mode distillation outcome over the seed set. The best lambda is the
// grid entry with the lowest mean test TER; reductions are measured per
// seed against the lambda = 0 baseline.
struct ModeAnalysis {
  std::string baseline_id, best_id;
  double best_lambda = 0.0;
  double baseline_mean = 0.0, best_mean = 0.0;
  double relative_reduction_pct = 0.0;  // of the means
  std::map<uint64_t, double> per_seed_reduction_pct;
  int kd_wins = 0;  // seeds where the best-lambda student beats lambda = 0
};

struct PipelineSummary {
  uint64_t config_hash = 0;
  std::vector<uint64_t> seeds;
  std::vector<SystemSpec> grid;  // table row order
  // reports[system][i] is seed seeds[i]'s score report.
  std::map<std::string, std::vector<eval::ScoreReport>> reports;
  ModeAnalysis offline, streaming;
  int streaming_reduction_ge_offline = 0;  // seeds
  int integrated_wins = 0;                 // seeds where BS2 beats BS1
  std::map<uint64_t, double> tse_offline_improvement_db;  // dev SI-SNR gain
  std::map<uint64_t, double> tse_causal_improvement_db;
  double stream_latency_samples = 0.0;
  double tse_latency_samples = 0.0;

  double mean_avg_ter(const std::string& system) const;
  std::string table_text() const;    // aligned table + trend lines
  std::string results_json() const;  // the same numbers, machine-readable
};

// corpus -> teacher -> extractors + cascade scoring -> students (lambda
// sweep, both modes) -> scores -> table. Every artifact is stamped with
// (config hash, seed) and reloaded instead of recomputed when present; a
// stamp mismatch is refused. `log` gets one progress line per step.
PipelineSummary run_pipeline(const config::ExperimentConfig& cfg, std::ostream& log);

}  // namespace xd::pipeline
