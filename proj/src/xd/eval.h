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

namespace xd::eval {

using corpus::TokenSequence;

struct EditCounts {
  int distance = 0;
  int subs = 0;
  int ins = 0;
  int dels = 0;
};

// Levenshtein with unit costs; S/I/D from one optimal alignment, ties
// resolved preferring substitution, then deletion, then insertion.
EditCounts edit_distance(const TokenSequence& hyp, const TokenSequence& ref);

struct ConditionScore {
  int condition = 0;  // SNR in dB
  double ter = 0.0;   // percent
  int edits = 0;
  int ref_tokens = 0;
  int utterances = 0;
};

struct ScoreReport {
  std::string system_id;
  uint64_t seed = 0;
  std::vector<ConditionScore> per_condition;
  double avg_ter = 0.0;  // pooled: total edits / total ref tokens
  int subs = 0, ins = 0, dels = 0;
};

// hyps/refs aligned by index; conditions[i] labels utterance i's subset.
ScoreReport score_split(const std::vector<TokenSequence>& hyps,
                        const std::vector<TokenSequence>& refs,
                        const std::vector<int>& conditions);

struct Comparison {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double relative_reduction_pct = 0.0;  // (mean_a - mean_b)/mean_a * 100
  int wins_b = 0;                       // seeds where b has lower avg TER
  int ties = 0;
  int seeds = 0;
};

// Reports must cover the same seed sets (order-insensitive).
Comparison compare_systems(const std::vector<ScoreReport>& reports_a,
                           const std::vector<ScoreReport>& reports_b);

// Aligned plain-text table, systems as rows, SNR conditions + Avg columns.
std::string format_table(const std::vector<ScoreReport>& reports);

std::string report_csv(const ScoreReport& report);
ScoreReport parse_report_csv(const std::string& text);

}  // namespace xd::eval
