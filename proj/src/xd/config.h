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
#include <vector>

#include "xd/corpus.h"
#include "xd/distill.h"
#include "xd/transducer.h"
#include "xd/tse.h"

namespace xd::config {

// Everything one experiment needs: corpus recipe, model sizes, trainer
// knobs per stage, the lambda sweep, and the seed list. Defaults complete
// the full pipeline in well under half an hour on one desktop core.
struct ExperimentConfig {
  corpus::CorpusConfig corpus;
  model::ModelConfig model;  // offline base; streaming variants flip the flag
  tse::ExtractorConfig tse;  // offline base; causal variant flips the flag

  train::TrainConfig teacher_train{.epochs = 60, .lr = 0.02, .momentum = 0.5};
  train::TrainConfig student_train{.epochs = 60, .lr = 0.02, .momentum = 0.5};
  train::TrainConfig tse_train{.epochs = 30, .lr = 0.02, .momentum = 0.5};

  std::vector<double> lambda_grid = {1.0, 0.5, 0.1, 0.01, 0.001};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string outdir = "runs/default";
  int beam = 8;

  void validate() const;

  // One sorted `key=value` line per field; the identity that gets hashed.
  std::string canonical_text() const;
  uint64_t hash() const;  // FNV-1a 64 of canonical_text()
};

ExperimentConfig default_config();

// `text` is key=value lines; '#' starts a comment. Unknown keys are
// config errors. `overrides` are further key=value pairs (--set).
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

uint64_t fnv1a64(const std::string& text);

}  // namespace xd::config
