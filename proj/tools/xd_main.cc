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
//
// One binary, eight subcommands: corpus, train-teacher, train-tse,
// train-student, decode, score, report, pipeline. Exit codes: 0 success,
// 2 configuration error, 3 numeric failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xd/checkpoint.h"
#include "xd/config.h"
#include "xd/corpus.h"
#include "xd/decode.h"
#include "xd/distill.h"
#include "xd/error.h"
#include "xd/eval.h"
#include "xd/pipeline.h"
#include "xd/threads.h"
#include "xd/tse.h"

namespace fs = std::filesystem;

namespace {

struct Shared {
  std::string config_path;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool seed_given = false;

  xd::config::ExperimentConfig cfg() const {
    return config_path.empty() ? xd::config::parse_config("", sets)
                               : xd::config::load_config(config_path, sets);
  }
  uint64_t effective_seed(const xd::config::ExperimentConfig& c) const {
    return seed_given ? seed : c.seeds.front();
  }
};

void add_shared(CLI::App* cmd, Shared& sh, bool with_seed = true) {
  cmd->add_option("--config", sh.config_path, "key=value config file");
  cmd->add_option("--set", sh.sets, "config override key=value (repeatable)");
  if (with_seed) {
    cmd->add_option("--seed", sh.seed, "experiment seed (default: first config seed)")
        ->each([&sh](const std::string&) { sh.seed_given = true; });
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw xd::ConfigError("cannot write \"" + path + "\"");
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw xd::ConfigError("cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void check_hash(const xd::diff::CheckpointMeta& meta, const xd::config::ExperimentConfig& cfg,
                const std::string& path) {
  if (meta.config_hash != cfg.hash()) {
    throw xd::ConfigError("\"" + path + "\" was built under config " +
                          xd::pipeline::hash_hex(meta.config_hash) + ", current is " +
                          xd::pipeline::hash_hex(cfg.hash()) + "; refusing stale artifact");
  }
}

// ---- corpus ----------------------------------------------------------

void cmd_corpus(const Shared& sh, const std::string& out) {
  auto cfg = sh.cfg();
  uint64_t seed = sh.effective_seed(cfg);
  std::string dir = out.empty() ? xd::pipeline::seed_paths(cfg.outdir, seed).corpus_dir : out;
  fs::create_directories(dir);
  xd::corpus::Dataset ds = xd::corpus::build_dataset(cfg.corpus, seed);
  xd::corpus::save_dataset(dir, xd::pipeline::hash_hex(cfg.hash()), seed, cfg.corpus.k_vocab, ds);
  std::cout << "corpus: wrote " << ds.train.size() << " train / " << ds.dev.size() << " dev / "
            << ds.test_by_snr.size() << " test splits to " << dir << "\n";
}

// ---- training steps --------------------------------------------------

void cmd_train_teacher(const Shared& sh, const std::string& corpus_dir, const std::string& out) {
  auto cfg = sh.cfg();
  uint64_t seed = sh.effective_seed(cfg);
  auto paths = xd::pipeline::seed_paths(cfg.outdir, seed);
  std::string cdir = corpus_dir.empty() ? paths.corpus_dir : corpus_dir;
  xd::corpus::Dataset ds = xd::pipeline::load_stamped_corpus(cfg, seed, cdir, "train-teacher");
  xd::model::ModelConfig mcfg = cfg.model;
  mcfg.streaming = false;
  xd::train::TrainConfig tc = cfg.teacher_train;
  tc.seed = seed;
  xd::train::TrainResult res;
  xd::model::TransducerModel m = xd::train::train_teacher(ds.train, ds.dev, mcfg, tc, &res);
  std::string path = out.empty() ? paths.ckpt("teacher") : out;
  fs::create_directories(fs::path(path).parent_path());
  xd::diff::save_checkpoint(path, m.ps, {"teacher", cfg.hash(), seed, {}});
  write_file(fs::path(path).replace_extension(".log").string(), res.log_csv());
  std::cout << res.log_csv();
  std::cout << "train-teacher: saved " << path << "\n";
}

void cmd_train_tse(const Shared& sh, bool causal, const std::string& corpus_dir,
                   const std::string& out) {
  auto cfg = sh.cfg();
  uint64_t seed = sh.effective_seed(cfg);
  auto paths = xd::pipeline::seed_paths(cfg.outdir, seed);
  std::string cdir = corpus_dir.empty() ? paths.corpus_dir : corpus_dir;
  xd::corpus::Dataset ds = xd::pipeline::load_stamped_corpus(cfg, seed, cdir, "train-tse");
  xd::tse::ExtractorConfig xcfg = cfg.tse;
  xcfg.causal = causal;
  xd::train::TrainConfig tc = cfg.tse_train;
  tc.seed = seed;
  xd::tse::TseTrainResult res;
  xd::tse::ExtractorModel m = xd::tse::train_extractor(ds.train, ds.dev, xcfg, tc, &res);
  std::string stage = causal ? "tse_causal" : "tse_offline";
  std::string path = out.empty() ? paths.ckpt(stage) : out;
  fs::create_directories(fs::path(path).parent_path());
  xd::diff::save_checkpoint(path, m.ps, {stage, cfg.hash(), seed, {}});
  std::cout << "train-tse: saved " << path << " (dev si-snr gain "
            << (res.dev_improvement.empty() ? 0.0 : res.dev_improvement.back()) << " dB)\n";
}

void cmd_train_student(const Shared& sh, double lambda, const std::string& teacher_path,
                       bool streaming, const std::string& init_from,
                       const std::string& corpus_dir, const std::string& out) {
  auto cfg = sh.cfg();
  uint64_t seed = sh.effective_seed(cfg);
  auto paths = xd::pipeline::seed_paths(cfg.outdir, seed);
  std::string cdir = corpus_dir.empty() ? paths.corpus_dir : corpus_dir;
  xd::corpus::Dataset ds = xd::pipeline::load_stamped_corpus(cfg, seed, cdir, "train-student");

  xd::model::ModelConfig mcfg = cfg.model;
  mcfg.streaming = streaming;
  xd::model::TransducerModel teacher;
  teacher.cfg = cfg.model;
  teacher.cfg.streaming = false;
  bool have_teacher = !teacher_path.empty();
  if (lambda > 0.0 && !have_teacher) {
    throw xd::ConfigError("train-student: --lambda > 0 requires --teacher <ckpt>");
  }
  if (have_teacher) {
    if (!fs::exists(teacher_path)) {
      throw xd::ConfigError("train-student: missing teacher checkpoint \"" + teacher_path +
                            "\" (run train-teacher first)");
    }
    check_hash(xd::diff::load_checkpoint(teacher_path, teacher.ps), cfg, teacher_path);
    teacher.ps.freeze_all();
  }

  xd::diff::ParamStore init_ps;
  const xd::diff::ParamStore* init = nullptr;
  if (!init_from.empty()) {
    if (!fs::exists(init_from)) {
      throw xd::ConfigError("train-student: missing init checkpoint \"" + init_from + "\"");
    }
    check_hash(xd::diff::load_checkpoint(init_from, init_ps), cfg, init_from);
    init = &init_ps;
  }

  xd::train::TrainConfig tc = cfg.student_train;
  tc.seed = seed;
  tc.lambda = lambda;
  xd::train::TrainResult res;
  xd::model::TargetSpeakerModel m = xd::train::train_student(
      ds.train, ds.dev, mcfg, tc, have_teacher ? &teacher : nullptr, init, &res);
  std::string stage = std::string("student_") + (streaming ? "streaming" : "offline");
  std::string path = out.empty() ? paths.dir + "/" + stage + ".ckpt" : out;
  fs::create_directories(fs::path(path).parent_path());
  char lam[32];
  std::snprintf(lam, sizeof lam, "%g", lambda);
  xd::diff::save_checkpoint(path, m.ps, {stage, cfg.hash(), seed, {{"lambda", lam}}});
  write_file(fs::path(path).replace_extension(".log").string(), res.log_csv());
  std::cout << res.log_csv();
  std::cout << "train-student: saved " << path << "\n";
}

// ---- decode ----------------------------------------------------------

const xd::corpus::Signal& pick_input(const xd::corpus::MixtureRecord& rec,
                                     const std::string& which) {
  if (which == "mixture") return rec.mixture;
  if (which == "target_plus_noise") return rec.target_plus_noise;
  if (which == "target_clean") return rec.target_clean;
  throw xd::ConfigError("decode: unknown --input \"" + which + "\"");
}

void cmd_decode(const Shared& sh, const std::string& ckpt, const std::string& tse_ckpt,
                const std::string& split, int beam, bool force_streaming, std::string input,
                const std::string& out) {
  auto cfg = sh.cfg();
  if (beam <= 0) beam = cfg.beam;
  if (!fs::exists(ckpt)) throw xd::ConfigError("decode: missing checkpoint \"" + ckpt + "\"");
  xd::diff::CheckpointMeta meta = xd::diff::peek_checkpoint(ckpt);
  check_hash(meta, cfg, ckpt);

  std::string echo;
  std::vector<xd::corpus::MixtureRecord> recs = xd::corpus::load_split(split, &echo);
  if (echo != xd::pipeline::hash_hex(cfg.hash())) {
    throw xd::ConfigError("decode: split \"" + split + "\" carries a different config hash");
  }

  const bool student = meta.kind.rfind("student_", 0) == 0;
  const bool streaming = force_streaming || meta.kind == "student_streaming";
  if (input.empty()) {
    input = (student || !tse_ckpt.empty()) ? "mixture" : "target_plus_noise";
  }

  xd::model::TransducerModel teacher;
  xd::model::TargetSpeakerModel ts;
  xd::tse::ExtractorModel ext;
  bool have_ext = false;
  if (student) {
    ts.cfg = cfg.model;
    ts.cfg.streaming = streaming;
    xd::diff::load_checkpoint(ckpt, ts.ps);
  } else if (meta.kind == "teacher") {
    teacher.cfg = cfg.model;
    teacher.cfg.streaming = false;
    xd::diff::load_checkpoint(ckpt, teacher.ps);
  } else {
    throw xd::ConfigError("decode: cannot decode with checkpoint kind \"" + meta.kind + "\"");
  }
  if (!tse_ckpt.empty()) {
    if (student) throw xd::ConfigError("decode: --tse only applies to teacher checkpoints");
    xd::diff::CheckpointMeta xmeta = xd::diff::peek_checkpoint(tse_ckpt);
    check_hash(xmeta, cfg, tse_ckpt);
    ext.cfg = cfg.tse;
    ext.cfg.causal = xmeta.kind == "tse_causal";
    xd::diff::load_checkpoint(tse_ckpt, ext.ps);
    have_ext = true;
  }

  std::vector<xd::decode::DecodeResult> results(recs.size());
  xd::parallel_for(static_cast<int64_t>(recs.size()), [&](int64_t i) {
    const xd::corpus::MixtureRecord& rec = recs[i];
    if (student) {
      xd::Array emb =
          xd::model::embed_speaker(ts, xd::model::model_features(rec.enrollment, ts.cfg));
      results[i] =
          streaming
              ? xd::decode::stream_decode(ts, pick_input(rec, input), emb, cfg.model.chunk,
                                          cfg.model.history)
              : xd::decode::beam_decode(ts.cfg, ts.ps,
                                        xd::model::ts_encode(ts, pick_input(rec, input), emb),
                                        beam);
      return;
    }
    xd::corpus::Signal sig = pick_input(rec, input);
    if (have_ext) sig = xd::tse::extract_target(ext, sig, rec.enrollment);
    results[i] = streaming
                     ? xd::decode::stream_decode(teacher, sig, cfg.model.chunk, cfg.model.history)
                     : xd::decode::beam_decode(teacher, xd::model::encode_signal(teacher, sig),
                                               beam);
  });

  std::string stem = fs::path(split).stem().string();
  std::ostringstream text;
  int caps = 0;
  for (size_t i = 0; i < recs.size(); ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-%04zu", stem.c_str(), i);
    text << id << "\t";
    for (size_t k = 0; k < results[i].tokens.size(); ++k) {
      if (k) text << " ";
      text << results[i].tokens[k];
    }
    text << "\n";
    caps += results[i].cap_hit ? 1 : 0;
  }
  if (caps > 0) {
    std::cerr << "note: emission cap (u <= t) bound on " << caps << " of " << recs.size()
              << " utterances\n";
  }
  if (out.empty()) {
    std::cout << text.str();
  } else {
    write_file(out, text.str());
    std::cout << "decode: wrote " << recs.size() << " hypotheses to " << out << "\n";
  }
}

// ---- score / report --------------------------------------------------

std::vector<xd::corpus::TokenSequence> parse_hyp_file(const std::string& text) {
  std::vector<xd::corpus::TokenSequence> hyps;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw xd::ConfigError("score: hypothesis line without a tab: \"" + line + "\"");
    }
    xd::corpus::TokenSequence toks;
    std::istringstream ts(line.substr(tab + 1));
    int t = 0;
    while (ts >> t) toks.push_back(t);
    hyps.push_back(std::move(toks));
  }
  return hyps;
}

void cmd_score(const Shared& sh, const std::string& hyp_path, const std::string& ref_path,
               const std::string& system, const std::string& out) {
  auto cfg = sh.cfg();
  std::string echo;
  uint64_t ref_seed = 0;
  std::vector<xd::corpus::MixtureRecord> refs =
      xd::corpus::load_split(ref_path, &echo, &ref_seed);
  if (echo != xd::pipeline::hash_hex(cfg.hash())) {
    throw xd::ConfigError("score: split \"" + ref_path + "\" carries a different config hash");
  }
  std::vector<xd::corpus::TokenSequence> hyps = parse_hyp_file(read_file(hyp_path));
  if (hyps.size() != refs.size()) {
    throw xd::ConfigError("score: " + std::to_string(hyps.size()) + " hypotheses vs " +
                          std::to_string(refs.size()) + " references");
  }
  std::vector<xd::corpus::TokenSequence> ref_tokens;
  std::vector<int> conds;
  for (const auto& r : refs) {
    ref_tokens.push_back(r.transcript);
    conds.push_back(static_cast<int>(std::lround(r.snr_db)));
  }
  xd::eval::ScoreReport rep = xd::eval::score_split(hyps, ref_tokens, conds);
  rep.system_id = system;
  rep.seed = sh.seed_given ? sh.seed : ref_seed;
  std::string csv = xd::eval::report_csv(rep);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_file(out, csv);
    std::cout << "score: avg ter " << rep.avg_ter << "% -> " << out << "\n";
  }
}

void cmd_report(const std::vector<std::string>& paths) {
  std::vector<xd::eval::ScoreReport> reports;
  for (const std::string& p : paths) {
    std::istringstream in(read_file(p));
    std::ostringstream body;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] == '#') continue;  // pipeline stamp lines
      body << line << "\n";
    }
    reports.push_back(xd::eval::parse_report_csv(body.str()));
  }
  std::cout << xd::eval::format_table(reports);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-distilled target-speaker transducer workbench"};
  app.require_subcommand(1);

  Shared sh_corpus, sh_teacher, sh_tse, sh_student, sh_decode, sh_score, sh_pipe;
  std::string out, corpus_dir, teacher_path, init_from, tse_ckpt, ckpt, split, hyp, ref, system;
  std::vector<std::string> report_paths;
  double lambda = 0.0;
  int beam = 0;
  bool causal = false, streaming = false;

  CLI::App* c = app.add_subcommand("corpus", "synthesize and save a dataset");
  add_shared(c, sh_corpus);
  c->add_option("--out", out, "output directory (default: <outdir>/seed<N>/corpus)");
  c->callback([&] { cmd_corpus(sh_corpus, out); });

  CLI::App* tt = app.add_subcommand("train-teacher", "pretrain the single-talker transducer");
  add_shared(tt, sh_teacher);
  tt->add_option("--epochs", [&sh_teacher](const std::vector<std::string>& v) {
      sh_teacher.sets.push_back("teacher.epochs=" + v.front());
      return true;
    }, "override teacher.epochs");
  tt->add_option("--corpus", corpus_dir, "corpus directory");
  tt->add_option("--out", out, "checkpoint path");
  tt->callback([&] { cmd_train_teacher(sh_teacher, corpus_dir, out); });

  CLI::App* tx = app.add_subcommand("train-tse", "train the extraction front end");
  add_shared(tx, sh_tse);
  tx->add_flag("--causal", causal, "causal (streaming) variant");
  tx->add_option("--epochs", [&sh_tse](const std::vector<std::string>& v) {
      sh_tse.sets.push_back("tse_train.epochs=" + v.front());
      return true;
    }, "override tse_train.epochs");
  tx->add_option("--corpus", corpus_dir, "corpus directory");
  tx->add_option("--out", out, "checkpoint path");
  tx->callback([&] { cmd_train_tse(sh_tse, causal, corpus_dir, out); });

  CLI::App* ts = app.add_subcommand("train-student", "train the TS transducer (optionally distilled)");
  add_shared(ts, sh_student);
  ts->add_option("--lambda", lambda, "KD loss weight")->check(CLI::NonNegativeNumber);
  ts->add_option("--teacher", teacher_path, "teacher checkpoint (required when lambda > 0)");
  ts->add_flag("--streaming", streaming, "streaming encoder variant");
  ts->add_option("--init-from", init_from, "initialize from this checkpoint (offline -> streaming)");
  ts->add_option("--epochs", [&sh_student](const std::vector<std::string>& v) {
      sh_student.sets.push_back("student.epochs=" + v.front());
      return true;
    }, "override student.epochs");
  ts->add_option("--corpus", corpus_dir, "corpus directory");
  ts->add_option("--out", out, "checkpoint path");
  ts->callback([&] {
    cmd_train_student(sh_student, lambda, teacher_path, streaming, init_from, corpus_dir, out);
  });

  CLI::App* dc = app.add_subcommand("decode", "write `utt_id<TAB>tokens` hypotheses");
  add_shared(dc, sh_decode, false);
  dc->add_option("--ckpt", ckpt, "teacher or student checkpoint")->required();
  dc->add_option("--tse", tse_ckpt, "extractor checkpoint (cascade; teacher only)");
  dc->add_option("--split", split, "corpus split file (.bin)")->required();
  dc->add_option("--beam", beam, "beam width (default: config beam)");
  dc->add_flag("--streaming", streaming, "force chunked streaming decode");
  std::string input;
  dc->add_option("--input", input, "mixture | target_plus_noise | target_clean");
  dc->add_option("--out", out, "hypothesis file (default: stdout)");
  dc->callback([&] {
    cmd_decode(sh_decode, ckpt, tse_ckpt, split, beam, streaming, input, out);
  });

  CLI::App* sc = app.add_subcommand("score", "TER against a reference split");
  add_shared(sc, sh_score);
  sc->add_option("--hyp", hyp, "hypothesis file from decode")->required();
  sc->add_option("--ref", ref, "reference split file (.bin)")->required();
  sc->add_option("--system", system, "system label for the report");
  sc->add_option("--out", out, "report csv (default: stdout)");
  sc->callback([&] { cmd_score(sh_score, hyp, ref, system, out); });

  CLI::App* rp = app.add_subcommand("report", "format score csv files as a table");
  rp->add_option("csv", report_paths, "score csv files")->required();
  rp->callback([&] { cmd_report(report_paths); });

  CLI::App* pl = app.add_subcommand("pipeline", "run the full experiment grid");
  add_shared(pl, sh_pipe, false);
  pl->callback([&] { xd::pipeline::run_pipeline(sh_pipe.cfg(), std::cout); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const xd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const xd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
