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

#include "xd/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "xd/checkpoint.h"
#include "xd/decode.h"
#include "xd/distill.h"
#include "xd/error.h"
#include "xd/threads.h"
#include "xd/tse.h"

namespace xd::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string hash_hex(uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string lambda_tag(double l) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", l);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("pipeline: cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("pipeline: cannot write \"" + path + "\"");
  out << text;
}

void check_meta(const diff::CheckpointMeta& meta, const std::string& kind, uint64_t chash,
                uint64_t seed, const std::string& path) {
  if (meta.kind != kind) {
    throw ConfigError("pipeline: \"" + path + "\" holds kind \"" + meta.kind + "\", expected \"" +
                      kind + "\"");
  }
  if (meta.config_hash != chash) {
    throw ConfigError("pipeline: \"" + path + "\" was built under config " +
                      hash_hex(meta.config_hash) + ", current is " + hash_hex(chash) +
                      "; refusing stale artifact");
  }
  if (meta.seed != seed) {
    throw ConfigError("pipeline: \"" + path + "\" was built for seed " +
                      std::to_string(meta.seed) + ", expected " + std::to_string(seed));
  }
}

corpus::Dataset ensure_corpus(const config::ExperimentConfig& cfg, uint64_t seed,
                              const SeedPaths& paths, uint64_t chash, std::ostream& log) {
  const std::string stamp = hash_hex(chash);
  if (fs::exists(paths.corpus_dir + "/train.bin")) {
    corpus::Dataset ds = load_stamped_corpus(cfg, seed, paths.corpus_dir, "pipeline corpus");
    log << "[seed " << seed << "] corpus: loaded " << ds.train.size() << " train / "
        << ds.dev.size() << " dev records\n";
    return ds;
  }
  corpus::Dataset ds = corpus::build_dataset(cfg.corpus, seed);
  corpus::save_dataset(paths.corpus_dir, stamp, seed, cfg.corpus.k_vocab, ds);
  log << "[seed " << seed << "] corpus: built " << ds.train.size() << " train / "
      << ds.dev.size() << " dev records\n";
  return ds;
}

model::TransducerModel ensure_teacher(const config::ExperimentConfig& cfg, uint64_t seed,
                                      const corpus::Dataset& ds, const SeedPaths& paths,
                                      uint64_t chash, std::ostream& log) {
  model::ModelConfig mcfg = cfg.model;
  mcfg.streaming = false;
  model::TransducerModel m;
  m.cfg = mcfg;
  const std::string path = paths.ckpt("teacher");
  if (fs::exists(path)) {
    check_meta(diff::load_checkpoint(path, m.ps), "teacher", chash, seed, path);
    log << "[seed " << seed << "] teacher: loaded\n";
    return m;
  }
  train::TrainConfig tc = cfg.teacher_train;
  tc.seed = seed;
  train::TrainResult res;
  m = train::train_teacher(ds.train, ds.dev, mcfg, tc, &res);
  diff::CheckpointMeta meta{"teacher", chash, seed, {}};
  diff::save_checkpoint(path, m.ps, meta);
  write_text(paths.log("teacher"), res.log_csv());
  log << "[seed " << seed << "] teacher: trained, dev ter "
      << (res.history.empty() ? 0.0 : res.history.back().ter) << "%\n";
  return m;
}

tse::ExtractorModel ensure_extractor(const config::ExperimentConfig& cfg, uint64_t seed,
                                     bool causal, const corpus::Dataset& ds,
                                     const SeedPaths& paths, uint64_t chash, std::ostream& log) {
  tse::ExtractorConfig xcfg = cfg.tse;
  xcfg.causal = causal;
  const std::string stage = causal ? "tse_causal" : "tse_offline";
  const std::string path = paths.ckpt(stage);
  tse::ExtractorModel m;
  m.cfg = xcfg;
  if (fs::exists(path)) {
    check_meta(diff::load_checkpoint(path, m.ps), stage, chash, seed, path);
    log << "[seed " << seed << "] " << stage << ": loaded\n";
    return m;
  }
  train::TrainConfig tc = cfg.tse_train;
  tc.seed = seed;
  tse::TseTrainResult res;
  m = tse::train_extractor(ds.train, ds.dev, xcfg, tc, &res);
  diff::CheckpointMeta meta{stage, chash, seed, {}};
  diff::save_checkpoint(path, m.ps, meta);
  std::ostringstream tl;
  tl << "epoch,neg_si_snr,dev_si_snr,dev_improvement\n";
  for (size_t e = 0; e < res.epoch_loss.size(); ++e) {
    tl << e + 1 << "," << res.epoch_loss[e] << "," << res.dev_si_snr[e] << ","
       << res.dev_improvement[e] << "\n";
  }
  write_text(paths.log(stage), tl.str());
  log << "[seed " << seed << "] " << stage << ": trained, dev si-snr gain "
      << (res.dev_improvement.empty() ? 0.0 : res.dev_improvement.back()) << " dB\n";
  return m;
}

model::TargetSpeakerModel ensure_student(const config::ExperimentConfig& cfg, uint64_t seed,
                                         const SystemSpec& spec, const corpus::Dataset& ds,
                                         model::TransducerModel& teacher,
                                         const diff::ParamStore* init_values,
                                         const SeedPaths& paths, uint64_t chash,
                                         std::ostream& log) {
  model::ModelConfig mcfg = cfg.model;
  mcfg.streaming = spec.streaming;
  const std::string kind = spec.streaming ? "student_streaming" : "student_offline";
  const std::string path = paths.ckpt(spec.id);
  model::TargetSpeakerModel m;
  m.cfg = mcfg;
  if (fs::exists(path)) {
    diff::CheckpointMeta meta = diff::load_checkpoint(path, m.ps);
    check_meta(meta, kind, chash, seed, path);
    if (meta.extra.count("system") && meta.extra.at("system") != spec.id) {
      throw ConfigError("pipeline: \"" + path + "\" holds system " + meta.extra.at("system") +
                        ", expected " + spec.id);
    }
    log << "[seed " << seed << "] " << spec.id << ": loaded\n";
    return m;
  }
  train::TrainConfig tc = cfg.student_train;
  tc.seed = seed;
  tc.lambda = spec.lambda;
  train::TrainResult res;
  m = train::train_student(ds.train, ds.dev, mcfg, tc, &teacher, init_values, &res);
  diff::CheckpointMeta meta{kind, chash, seed,
                            {{"system", spec.id}, {"lambda", lambda_tag(spec.lambda)}}};
  diff::save_checkpoint(path, m.ps, meta);
  write_text(paths.log(spec.id), res.log_csv());
  log << "[seed " << seed << "] " << spec.id << " (lambda " << lambda_tag(spec.lambda)
      << (spec.streaming ? ", streaming" : ", offline") << "): trained, dev ter "
      << (res.history.empty() ? 0.0 : res.history.back().ter) << "%\n";
  return m;
}

eval::ScoreReport score_system(const config::ExperimentConfig& cfg, const SystemSpec& spec,
                               const corpus::Dataset& ds, model::TransducerModel& teacher,
                               tse::ExtractorModel& tse_off, tse::ExtractorModel& tse_causal,
                               std::map<std::string, model::TargetSpeakerModel>& students,
                               uint64_t seed) {
  std::vector<const corpus::MixtureRecord*> recs;
  std::vector<int> conds;
  for (const auto& [snr, split] : ds.test_by_snr) {
    for (const corpus::MixtureRecord& r : split) {
      recs.push_back(&r);
      conds.push_back(snr);
    }
  }
  std::vector<model::TokenSequence> hyps(recs.size());
  std::vector<model::TokenSequence> refs(recs.size());
  parallel_for(static_cast<int64_t>(recs.size()), [&](int64_t i) {
    const corpus::MixtureRecord& rec = *recs[i];
    refs[i] = rec.transcript;
    if (spec.cascade) {
      hyps[i] = spec.streaming
                    ? tse::cascade_decode_streaming(&tse_causal, teacher, rec, cfg.model.chunk,
                                                    cfg.model.history)
                    : tse::cascade_decode(&tse_off, teacher, rec, cfg.beam);
      return;
    }
    model::TargetSpeakerModel& m = students.at(spec.id);
    Array emb = model::embed_speaker(m, model::model_features(rec.enrollment, m.cfg));
    if (spec.streaming) {
      hyps[i] = decode::stream_decode(m, rec.mixture, emb, cfg.model.chunk, cfg.model.history)
                    .tokens;
    } else {
      hyps[i] = decode::beam_decode(m.cfg, m.ps, model::ts_encode(m, rec.mixture, emb), cfg.beam)
                    .tokens;
    }
  });
  eval::ScoreReport rep = eval::score_split(hyps, refs, conds);
  rep.system_id = spec.id;
  rep.seed = seed;
  return rep;
}

eval::ScoreReport ensure_scores(const config::ExperimentConfig& cfg, const SystemSpec& spec,
                                const corpus::Dataset& ds, model::TransducerModel& teacher,
                                tse::ExtractorModel& tse_off, tse::ExtractorModel& tse_causal,
                                std::map<std::string, model::TargetSpeakerModel>& students,
                                const SeedPaths& paths, uint64_t chash, uint64_t seed,
                                std::ostream& log) {
  const std::string path = paths.scores(spec.id);
  const std::string stamp = "# config=" + hash_hex(chash) + " seed=" + std::to_string(seed);
  if (fs::exists(path)) {
    std::istringstream in(read_text(path));
    std::string first;
    std::getline(in, first);
    if (first != stamp) {
      throw ConfigError("pipeline scores: \"" + path +
                        "\" carries a different config hash or seed; refusing stale artifact");
    }
    std::ostringstream rest;
    rest << in.rdbuf();
    eval::ScoreReport rep = eval::parse_report_csv(rest.str());
    if (rep.system_id != spec.id) {
      throw ConfigError("pipeline scores: \"" + path + "\" holds system " + rep.system_id);
    }
    log << "[seed " << seed << "] scores " << spec.id << ": loaded (avg " << rep.avg_ter
        << "%)\n";
    return rep;
  }
  eval::ScoreReport rep =
      score_system(cfg, spec, ds, teacher, tse_off, tse_causal, students, seed);
  write_text(path, stamp + "\n" + eval::report_csv(rep));
  log << "[seed " << seed << "] scores " << spec.id << ": avg " << rep.avg_ter << "%\n";
  return rep;
}

// Index of the report with the given seed (reports are appended in seed
// order, but look up defensively).
const eval::ScoreReport& report_for_seed(const std::vector<eval::ScoreReport>& reps,
                                         uint64_t seed) {
  for (const eval::ScoreReport& r : reps) {
    if (r.seed == seed) return r;
  }
  throw ConfigError("pipeline: missing score report for seed " + std::to_string(seed));
}

ModeAnalysis analyze_mode(const PipelineSummary& sum, const config::ExperimentConfig& cfg,
                          bool streaming) {
  ModeAnalysis a;
  a.baseline_id = streaming ? "BS2" : "BO2";
  const char* prefix = streaming ? "PS" : "PO";
  int best = 0;
  double best_mean = 0.0;
  for (size_t i = 0; i < cfg.lambda_grid.size(); ++i) {
    std::string id = prefix + std::to_string(i + 1);
    double mean = sum.mean_avg_ter(id);
    if (i == 0 || mean < best_mean) {
      best = static_cast<int>(i);
      best_mean = mean;
    }
  }
  a.best_id = prefix + std::to_string(best + 1);
  a.best_lambda = cfg.lambda_grid[best];
  a.baseline_mean = sum.mean_avg_ter(a.baseline_id);
  a.best_mean = best_mean;
  a.relative_reduction_pct =
      a.baseline_mean == 0.0 ? 0.0 : (a.baseline_mean - a.best_mean) / a.baseline_mean * 100.0;
  for (uint64_t seed : sum.seeds) {
    double base = report_for_seed(sum.reports.at(a.baseline_id), seed).avg_ter;
    double prop = report_for_seed(sum.reports.at(a.best_id), seed).avg_ter;
    a.per_seed_reduction_pct[seed] = base == 0.0 ? 0.0 : (base - prop) / base * 100.0;
    if (prop < base) ++a.kd_wins;
  }
  return a;
}

}  // namespace

std::vector<SystemSpec> system_grid(const config::ExperimentConfig& cfg) {
  std::vector<SystemSpec> grid;
  grid.push_back({"BO1", true, false, 0.0});
  grid.push_back({"BS1", true, true, 0.0});
  grid.push_back({"BO2", false, false, 0.0});
  grid.push_back({"BS2", false, true, 0.0});
  for (size_t i = 0; i < cfg.lambda_grid.size(); ++i) {
    grid.push_back({"PO" + std::to_string(i + 1), false, false, cfg.lambda_grid[i]});
  }
  for (size_t i = 0; i < cfg.lambda_grid.size(); ++i) {
    grid.push_back({"PS" + std::to_string(i + 1), false, true, cfg.lambda_grid[i]});
  }
  return grid;
}

SeedPaths seed_paths(const std::string& outdir, uint64_t seed) {
  SeedPaths p;
  p.dir = outdir + "/seed" + std::to_string(seed);
  p.corpus_dir = p.dir + "/corpus";
  return p;
}

corpus::Dataset load_stamped_corpus(const config::ExperimentConfig& cfg, uint64_t seed,
                                    const std::string& dir, const std::string& step) {
  const std::string train_path = dir + "/train.bin";
  if (!fs::exists(train_path)) {
    throw ConfigError(step + ": missing corpus at \"" + dir +
                      "\" (build it with the corpus step first)");
  }
  std::string echo;
  uint64_t file_seed = 0;
  corpus::load_split(train_path, &echo, &file_seed);
  if (echo != hash_hex(cfg.hash()) || file_seed != seed) {
    throw ConfigError(step + ": \"" + train_path +
                      "\" carries a different config hash or seed; refusing stale artifact");
  }
  return corpus::load_dataset(dir, cfg.corpus.eval_snrs);
}

InitManifest init_streaming_from_offline(const diff::ParamStore& offline,
                                         diff::ParamStore& streaming) {
  return InitManifest{train::copy_param_values(offline, streaming)};
}

double PipelineSummary::mean_avg_ter(const std::string& system) const {
  auto it = reports.find(system);
  if (it == reports.end() || it->second.empty()) {
    throw ConfigError("pipeline: no reports for system \"" + system + "\"");
  }
  double sum = 0.0;
  for (const eval::ScoreReport& r : it->second) sum += r.avg_ter;
  return sum / static_cast<double>(it->second.size());
}

std::string PipelineSummary::table_text() const {
  // Aggregate: per-condition and pooled TERs averaged across seeds.
  std::vector<eval::ScoreReport> agg;
  for (const SystemSpec& spec : grid) {
    const std::vector<eval::ScoreReport>& reps = reports.at(spec.id);
    eval::ScoreReport a;
    a.system_id = spec.id;
    a.seed = 0;
    a.per_condition = reps.front().per_condition;
    for (size_t c = 0; c < a.per_condition.size(); ++c) {
      double ter = 0.0;
      int edits = 0, ref = 0, utt = 0;
      for (const eval::ScoreReport& r : reps) {
        ter += r.per_condition[c].ter;
        edits += r.per_condition[c].edits;
        ref += r.per_condition[c].ref_tokens;
        utt += r.per_condition[c].utterances;
      }
      a.per_condition[c].ter = ter / static_cast<double>(reps.size());
      a.per_condition[c].edits = edits;
      a.per_condition[c].ref_tokens = ref;
      a.per_condition[c].utterances = utt;
    }
    for (const eval::ScoreReport& r : reps) {
      a.avg_ter += r.avg_ter;
      a.subs += r.subs;
      a.ins += r.ins;
      a.dels += r.dels;
    }
    a.avg_ter /= static_cast<double>(reps.size());
    agg.push_back(std::move(a));
  }
  std::ostringstream out;
  out << "test TER%, mean over " << seeds.size() << " seeds\n";
  out << eval::format_table(agg) << "\n";
  char line[256];
  std::snprintf(line, sizeof line,
                "offline:   baseline %s %.2f, best %s (lambda %g) %.2f, reduction %.1f%%, "
                "wins %d/%d\n",
                offline.baseline_id.c_str(), offline.baseline_mean, offline.best_id.c_str(),
                offline.best_lambda, offline.best_mean, offline.relative_reduction_pct,
                offline.kd_wins, static_cast<int>(seeds.size()));
  out << line;
  std::snprintf(line, sizeof line,
                "streaming: baseline %s %.2f, best %s (lambda %g) %.2f, reduction %.1f%%, "
                "wins %d/%d\n",
                streaming.baseline_id.c_str(), streaming.baseline_mean, streaming.best_id.c_str(),
                streaming.best_lambda, streaming.best_mean, streaming.relative_reduction_pct,
                streaming.kd_wins, static_cast<int>(seeds.size()));
  out << line;
  std::snprintf(line, sizeof line, "streaming reduction >= offline reduction on %d/%d seeds\n",
                streaming_reduction_ge_offline, static_cast<int>(seeds.size()));
  out << line;
  std::snprintf(line, sizeof line, "integrated BS2 beats cascade BS1 on %d/%d seeds\n",
                integrated_wins, static_cast<int>(seeds.size()));
  out << line;
  double off_gain = 0.0, caus_gain = 0.0;
  for (const auto& [s, g] : tse_offline_improvement_db) off_gain += g;
  for (const auto& [s, g] : tse_causal_improvement_db) caus_gain += g;
  if (!tse_offline_improvement_db.empty()) {
    off_gain /= static_cast<double>(tse_offline_improvement_db.size());
    caus_gain /= static_cast<double>(tse_causal_improvement_db.size());
  }
  std::snprintf(line, sizeof line,
                "tse dev si-snr gain: offline %.2f dB, causal %.2f dB (mean over seeds)\n",
                off_gain, caus_gain);
  out << line;
  std::snprintf(line, sizeof line,
                "latency: streaming decode %.0f samples avg, tse causal front end %.0f samples\n",
                stream_latency_samples, tse_latency_samples);
  out << line;
  return out.str();
}

std::string PipelineSummary::results_json() const {
  json root;
  root["config_hash"] = hash_hex(config_hash);
  root["seeds"] = seeds;
  json systems = json::object();
  for (const SystemSpec& spec : grid) {
    json sys;
    sys["cascade"] = spec.cascade;
    sys["streaming"] = spec.streaming;
    if (spec.cascade) {
      sys["lambda"] = nullptr;
    } else {
      sys["lambda"] = spec.lambda;
    }
    sys["mean_avg_ter"] = mean_avg_ter(spec.id);
    json per_seed = json::object();
    for (const eval::ScoreReport& r : reports.at(spec.id)) {
      json entry;
      entry["avg_ter"] = r.avg_ter;
      json snr = json::object();
      for (const eval::ConditionScore& c : r.per_condition) {
        snr[std::to_string(c.condition)] = c.ter;
      }
      entry["per_snr"] = snr;
      per_seed[std::to_string(r.seed)] = entry;
    }
    sys["per_seed"] = per_seed;
    systems[spec.id] = sys;
  }
  root["systems"] = systems;
  auto mode_json = [&](const ModeAnalysis& a) {
    json m;
    m["baseline"] = a.baseline_id;
    m["best"] = a.best_id;
    m["best_lambda"] = a.best_lambda;
    m["baseline_mean_ter"] = a.baseline_mean;
    m["best_mean_ter"] = a.best_mean;
    m["relative_reduction_pct"] = a.relative_reduction_pct;
    json per_seed = json::object();
    for (const auto& [s, red] : a.per_seed_reduction_pct) per_seed[std::to_string(s)] = red;
    m["per_seed_reduction_pct"] = per_seed;
    m["kd_wins"] = a.kd_wins;
    return m;
  };
  root["analysis"]["offline"] = mode_json(offline);
  root["analysis"]["streaming"] = mode_json(streaming);
  root["analysis"]["streaming_reduction_ge_offline"] = streaming_reduction_ge_offline;
  root["analysis"]["integrated_wins_vs_cascade"] = integrated_wins;
  json tse_j;
  for (const auto& [s, g] : tse_offline_improvement_db) {
    tse_j["offline_improvement_db"][std::to_string(s)] = g;
  }
  for (const auto& [s, g] : tse_causal_improvement_db) {
    tse_j["causal_improvement_db"][std::to_string(s)] = g;
  }
  root["tse"] = tse_j;
  root["latency"]["stream_samples"] = stream_latency_samples;
  root["latency"]["tse_samples"] = tse_latency_samples;
  return root.dump(2) + "\n";
}

PipelineSummary run_pipeline(const config::ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  fs::create_directories(cfg.outdir);
  const uint64_t chash = cfg.hash();
  const std::string canon = cfg.canonical_text();
  const std::string config_path = cfg.outdir + "/config.txt";
  if (fs::exists(config_path)) {
    if (read_text(config_path) != canon) {
      throw ConfigError("pipeline: \"" + cfg.outdir +
                        "\" holds artifacts for a different config; use a fresh outdir");
    }
  } else {
    write_text(config_path, canon);
  }

  PipelineSummary sum;
  sum.config_hash = chash;
  sum.seeds = cfg.seeds;
  sum.grid = system_grid(cfg);
  {
    model::ModelConfig scfg = cfg.model;
    scfg.streaming = true;
    sum.stream_latency_samples = decode::avg_latency_samples(scfg);
    sum.tse_latency_samples = cfg.tse.frame;
  }

  for (uint64_t seed : cfg.seeds) {
    SeedPaths paths = seed_paths(cfg.outdir, seed);
    fs::create_directories(paths.corpus_dir);
    corpus::Dataset ds = ensure_corpus(cfg, seed, paths, chash, log);

    model::TransducerModel teacher = ensure_teacher(cfg, seed, ds, paths, chash, log);
    teacher.ps.freeze_all();

    tse::ExtractorModel tse_off = ensure_extractor(cfg, seed, false, ds, paths, chash, log);
    tse::ExtractorModel tse_causal = ensure_extractor(cfg, seed, true, ds, paths, chash, log);
    sum.tse_offline_improvement_db[seed] = tse::mean_si_snr_improvement(tse_off, ds.dev);
    sum.tse_causal_improvement_db[seed] = tse::mean_si_snr_improvement(tse_causal, ds.dev);

    // Students: offline first, then their streaming counterparts (same
    // lambda) initialized from the offline parameters.
    std::map<std::string, model::TargetSpeakerModel> students;
    for (const SystemSpec& spec : sum.grid) {
      if (spec.cascade || spec.streaming) continue;
      students[spec.id] =
          ensure_student(cfg, seed, spec, ds, teacher, nullptr, paths, chash, log);
    }
    for (const SystemSpec& spec : sum.grid) {
      if (spec.cascade || !spec.streaming) continue;
      std::string offline_id = spec.id == "BS2" ? "BO2" : "PO" + spec.id.substr(2);
      students[spec.id] = ensure_student(cfg, seed, spec, ds, teacher,
                                         &students.at(offline_id).ps, paths, chash, log);
    }

    for (const SystemSpec& spec : sum.grid) {
      sum.reports[spec.id].push_back(ensure_scores(cfg, spec, ds, teacher, tse_off, tse_causal,
                                                   students, paths, chash, seed, log));
    }
  }

  sum.offline = analyze_mode(sum, cfg, false);
  sum.streaming = analyze_mode(sum, cfg, true);
  for (uint64_t seed : cfg.seeds) {
    if (sum.streaming.per_seed_reduction_pct.at(seed) >=
        sum.offline.per_seed_reduction_pct.at(seed)) {
      ++sum.streaming_reduction_ge_offline;
    }
    double cascade = report_for_seed(sum.reports.at("BS1"), seed).avg_ter;
    double integrated = report_for_seed(sum.reports.at("BS2"), seed).avg_ter;
    if (integrated < cascade) ++sum.integrated_wins;
  }

  write_text(cfg.outdir + "/table.txt", sum.table_text());
  write_text(cfg.outdir + "/results.json", sum.results_json());
  log << sum.table_text();
  return sum;
}

}  // namespace xd::pipeline
