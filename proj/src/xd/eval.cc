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

#include "xd/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "xd/error.h"

namespace xd::eval {

EditCounts edit_distance(const TokenSequence& hyp, const TokenSequence& ref) {
  int n = static_cast<int>(hyp.size());
  int m = static_cast<int>(ref.size());
  // dp[i][j]: cost of aligning hyp[0:i] with ref[0:j]. Moves: diagonal
  // match/substitution, up = insertion (extra hyp token), left = deletion
  // (missed ref token). Tie preference in traceback: sub > del > ins.
  std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
  for (int i = 0; i <= n; ++i) dp[i][0] = i;
  for (int j = 0; j <= m; ++j) dp[0][j] = j;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      int diag = dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      int up = dp[i - 1][j] + 1;
      int left = dp[i][j - 1] + 1;
      dp[i][j] = std::min({diag, up, left});
    }
  EditCounts out;
  out.distance = dp[n][m];
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && dp[i][j] == dp[i - 1][j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1)) {
      if (hyp[i - 1] != ref[j - 1]) ++out.subs;
      --i;
      --j;
    } else if (j > 0 && dp[i][j] == dp[i][j - 1] + 1) {
      ++out.dels;
      --j;
    } else {
      ++out.ins;
      --i;
    }
  }
  return out;
}

ScoreReport score_split(const std::vector<TokenSequence>& hyps,
                        const std::vector<TokenSequence>& refs,
                        const std::vector<int>& conditions) {
  if (hyps.size() != refs.size() || hyps.size() != conditions.size())
    throw ConfigError("score_split: hyp/ref/condition counts differ");
  std::map<int, ConditionScore> by_cond;
  ScoreReport rep;
  int total_edits = 0, total_ref = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    EditCounts ec = edit_distance(hyps[i], refs[i]);
    ConditionScore& cs = by_cond[conditions[i]];
    cs.condition = conditions[i];
    cs.edits += ec.distance;
    cs.ref_tokens += static_cast<int>(refs[i].size());
    cs.utterances += 1;
    rep.subs += ec.subs;
    rep.ins += ec.ins;
    rep.dels += ec.dels;
    total_edits += ec.distance;
    total_ref += static_cast<int>(refs[i].size());
  }
  for (auto& [cond, cs] : by_cond) {
    if (cs.ref_tokens == 0) throw ConfigError("score_split: condition with no reference tokens");
    cs.ter = 100.0 * cs.edits / cs.ref_tokens;
    rep.per_condition.push_back(cs);
  }
  if (total_ref == 0) throw ConfigError("score_split: no reference tokens");
  rep.avg_ter = 100.0 * total_edits / total_ref;
  return rep;
}

Comparison compare_systems(const std::vector<ScoreReport>& reports_a,
                           const std::vector<ScoreReport>& reports_b) {
  if (reports_a.empty() || reports_a.size() != reports_b.size())
    throw ConfigError("compare_systems: report sets empty or different sizes");
  std::map<uint64_t, double> a_by_seed, b_by_seed;
  for (const auto& r : reports_a) a_by_seed[r.seed] = r.avg_ter;
  for (const auto& r : reports_b) b_by_seed[r.seed] = r.avg_ter;
  if (a_by_seed.size() != reports_a.size())
    throw ConfigError("compare_systems: duplicate seeds in report set");
  Comparison cmp;
  for (const auto& [seed, ter_a] : a_by_seed) {
    auto it = b_by_seed.find(seed);
    if (it == b_by_seed.end()) throw ConfigError("compare_systems: seed sets differ");
    double ter_b = it->second;
    cmp.mean_a += ter_a;
    cmp.mean_b += ter_b;
    if (ter_b < ter_a)
      ++cmp.wins_b;
    else if (ter_b == ter_a)
      ++cmp.ties;
    ++cmp.seeds;
  }
  cmp.mean_a /= cmp.seeds;
  cmp.mean_b /= cmp.seeds;
  if (cmp.mean_a == 0.0) throw NumericError("compare_systems: zero mean TER in reference system");
  cmp.relative_reduction_pct = (cmp.mean_a - cmp.mean_b) / cmp.mean_a * 100.0;
  return cmp;
}

namespace {

std::string fmt1(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", x);
  return buf;
}

}  // namespace

std::string format_table(const std::vector<ScoreReport>& reports) {
  // Column set: union of conditions, ascending, then Avg.
  std::set<int> conds;
  for (const auto& r : reports)
    for (const auto& c : r.per_condition) conds.insert(c.condition);
  std::ostringstream os;
  size_t name_w = 8;
  for (const auto& r : reports) name_w = std::max(name_w, r.system_id.size() + 2);
  os << std::string(name_w, ' ');
  for (int c : conds) {
    std::string head = "SNR" + std::to_string(c);
    os << head << std::string(8 - std::min<size_t>(7, head.size()), ' ');
  }
  os << "Avg\n";
  for (const auto& r : reports) {
    os << r.system_id << std::string(name_w - r.system_id.size(), ' ');
    std::map<int, double> ter;
    for (const auto& c : r.per_condition) ter[c.condition] = c.ter;
    for (int c : conds) {
      std::string cell = ter.count(c) ? fmt1(ter[c]) : "-";
      os << cell << std::string(8 - std::min<size_t>(7, cell.size()), ' ');
    }
    os << fmt1(r.avg_ter) << "\n";
  }
  return os.str();
}

std::string report_csv(const ScoreReport& report) {
  std::ostringstream os;
  os << "system,seed,condition,ter,edits,ref_tokens,utterances\n";
  os.precision(17);
  for (const auto& c : report.per_condition)
    os << report.system_id << "," << report.seed << "," << c.condition << "," << c.ter << ","
       << c.edits << "," << c.ref_tokens << "," << c.utterances << "\n";
  // Trailing summary row reuses the count columns for S/I/D.
  os << report.system_id << "," << report.seed << ",avg," << report.avg_ter << "," << report.subs
     << "," << report.ins << "," << report.dels << "\n";
  return os.str();
}

ScoreReport parse_report_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("parse_report_csv: empty input");
  ScoreReport rep;
  bool have_avg = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() < 7) throw ConfigError("parse_report_csv: short row");
    rep.system_id = f[0];
    rep.seed = std::stoull(f[1]);
    if (f[2] == "avg") {
      rep.avg_ter = std::stod(f[3]);
      rep.subs = std::stoi(f[4]);
      rep.ins = std::stoi(f[5]);
      rep.dels = std::stoi(f[6]);
      have_avg = true;
    } else {
      ConditionScore cs;
      cs.condition = std::stoi(f[2]);
      cs.ter = std::stod(f[3]);
      cs.edits = std::stoi(f[4]);
      cs.ref_tokens = std::stoi(f[5]);
      cs.utterances = std::stoi(f[6]);
      rep.per_condition.push_back(cs);
    }
  }
  if (!have_avg) throw ConfigError("parse_report_csv: missing avg row");
  return rep;
}

}  // namespace xd::eval
