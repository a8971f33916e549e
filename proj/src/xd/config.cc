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

#include "xd/config.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "xd/error.h"

namespace xd::config {

namespace {

int parse_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) throw ConfigError("config: bad integer for " + key + ": \"" + v + "\"");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) throw ConfigError("config: bad number for " + key + ": \"" + v + "\"");
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) throw ConfigError("config: bad seed for " + key + ": \"" + v + "\"");
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : v) {
    if (ch == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T, typename Fmt>
std::string fmt_list(const std::vector<T>& xs, Fmt fmt) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out.push_back(',');
    out += fmt(xs[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

Field make_int(const char* key, std::function<int&(ExperimentConfig&)> ref) {
  return {key, [ref](ExperimentConfig& c) { return std::to_string(ref(c)); },
          [key, ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_int(key, v); }};
}

Field make_double(const char* key, std::function<double&(ExperimentConfig&)> ref) {
  return {key, [ref](ExperimentConfig& c) { return fmt_double(ref(c)); },
          [key, ref](ExperimentConfig& c, const std::string& v) { ref(c) = parse_double(key, v); }};
}

Field make_string(const char* key, std::function<std::string&(ExperimentConfig&)> ref) {
  return {key, [ref](ExperimentConfig& c) { return ref(c); },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = v; }};
}

Field make_int_list(const char* key, std::function<std::vector<int>&(ExperimentConfig&)> ref) {
  return {key,
          [ref](ExperimentConfig& c) {
            return fmt_list(ref(c), [](int x) { return std::to_string(x); });
          },
          [key, ref](ExperimentConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const std::string& p : split_list(v)) out.push_back(parse_int(key, p));
            ref(c) = std::move(out);
          }};
}

Field make_double_list(const char* key,
                       std::function<std::vector<double>&(ExperimentConfig&)> ref) {
  return {key, [ref](ExperimentConfig& c) { return fmt_list(ref(c), fmt_double); },
          [key, ref](ExperimentConfig& c, const std::string& v) {
            std::vector<double> out;
            for (const std::string& p : split_list(v)) out.push_back(parse_double(key, p));
            ref(c) = std::move(out);
          }};
}

Field make_u64_list(const char* key,
                    std::function<std::vector<uint64_t>&(ExperimentConfig&)> ref) {
  return {key,
          [ref](ExperimentConfig& c) {
            return fmt_list(ref(c), [](uint64_t x) { return std::to_string(x); });
          },
          [key, ref](ExperimentConfig& c, const std::string& v) {
            std::vector<uint64_t> out;
            for (const std::string& p : split_list(v)) out.push_back(parse_u64(key, p));
            ref(c) = std::move(out);
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto C = [](auto member) {  // accessor into cfg.corpus
      return [member](ExperimentConfig& c) -> auto& { return c.corpus.*member; };
    };
    auto M = [](auto member) {
      return [member](ExperimentConfig& c) -> auto& { return c.model.*member; };
    };
    auto X = [](auto member) {
      return [member](ExperimentConfig& c) -> auto& { return c.tse.*member; };
    };
    auto T = [](auto which, auto member) {
      return [which, member](ExperimentConfig& c) -> auto& { return c.*which.*member; };
    };

    f.push_back(make_int("corpus.k_vocab", C(&corpus::CorpusConfig::k_vocab)));
    f.push_back(make_int("corpus.d_sig", C(&corpus::CorpusConfig::d_sig)));
    f.push_back(make_int("corpus.frame_len", C(&corpus::CorpusConfig::frame_len)));
    f.push_back(make_int("corpus.seg_len", C(&corpus::CorpusConfig::seg_len)));
    f.push_back(make_double("corpus.sig_gain", C(&corpus::CorpusConfig::sig_gain)));
    f.push_back(make_double("corpus.jitter", C(&corpus::CorpusConfig::jitter)));
    f.push_back(make_double("corpus.gain_jitter", C(&corpus::CorpusConfig::gain_jitter)));
    f.push_back(make_int("corpus.train_speakers", C(&corpus::CorpusConfig::train_speakers)));
    f.push_back(make_int("corpus.dev_speakers", C(&corpus::CorpusConfig::dev_speakers)));
    f.push_back(make_int("corpus.test_speakers", C(&corpus::CorpusConfig::test_speakers)));
    f.push_back(make_int("corpus.train_records", C(&corpus::CorpusConfig::train_records)));
    f.push_back(make_int("corpus.dev_records", C(&corpus::CorpusConfig::dev_records)));
    f.push_back(make_int("corpus.eval_per_snr", C(&corpus::CorpusConfig::eval_per_snr)));
    f.push_back(make_int("corpus.tokens_min", C(&corpus::CorpusConfig::tokens_min)));
    f.push_back(make_int("corpus.tokens_max", C(&corpus::CorpusConfig::tokens_max)));
    f.push_back(make_int("corpus.enroll_tokens", C(&corpus::CorpusConfig::enroll_tokens)));
    f.push_back(make_double("corpus.sir_min", C(&corpus::CorpusConfig::sir_min)));
    f.push_back(make_double("corpus.sir_max", C(&corpus::CorpusConfig::sir_max)));
    f.push_back(make_double("corpus.snr_min", C(&corpus::CorpusConfig::snr_min)));
    f.push_back(make_double("corpus.snr_max", C(&corpus::CorpusConfig::snr_max)));
    f.push_back(make_int_list("corpus.eval_snrs", C(&corpus::CorpusConfig::eval_snrs)));

    f.push_back(make_int("model.window", M(&model::ModelConfig::window)));
    f.push_back(make_int("model.hop", M(&model::ModelConfig::hop)));
    f.push_back(make_int("model.subsample", M(&model::ModelConfig::subsample)));
    f.push_back(make_int("model.h", M(&model::ModelConfig::h)));
    f.push_back(make_int("model.enc_blocks", M(&model::ModelConfig::enc_blocks)));
    f.push_back(make_int("model.ff", M(&model::ModelConfig::ff)));
    f.push_back(make_int("model.pred_dim", M(&model::ModelConfig::pred_dim)));
    f.push_back(make_int("model.joint_dim", M(&model::ModelConfig::joint_dim)));
    f.push_back(make_int("model.spk_blocks", M(&model::ModelConfig::spk_blocks)));
    f.push_back(make_int("model.chunk", M(&model::ModelConfig::chunk)));
    f.push_back(make_int("model.history", M(&model::ModelConfig::history)));

    f.push_back(make_int("tse.frame", X(&tse::ExtractorConfig::frame)));
    f.push_back(make_int("tse.h", X(&tse::ExtractorConfig::h)));
    f.push_back(make_int("tse.blocks", X(&tse::ExtractorConfig::blocks)));
    f.push_back(make_int("tse.ff", X(&tse::ExtractorConfig::ff)));
    f.push_back(make_int("tse.spk_blocks", X(&tse::ExtractorConfig::spk_blocks)));

    f.push_back(make_int("teacher.epochs",
                         T(&ExperimentConfig::teacher_train, &train::TrainConfig::epochs)));
    f.push_back(
        make_double("teacher.lr", T(&ExperimentConfig::teacher_train, &train::TrainConfig::lr)));
    f.push_back(make_double("teacher.momentum",
                            T(&ExperimentConfig::teacher_train, &train::TrainConfig::momentum)));
    f.push_back(
        make_double("teacher.clip", T(&ExperimentConfig::teacher_train, &train::TrainConfig::clip)));
    f.push_back(make_int("teacher.batch_size",
                         T(&ExperimentConfig::teacher_train, &train::TrainConfig::batch_size)));

    f.push_back(make_int("student.epochs",
                         T(&ExperimentConfig::student_train, &train::TrainConfig::epochs)));
    f.push_back(
        make_double("student.lr", T(&ExperimentConfig::student_train, &train::TrainConfig::lr)));
    f.push_back(make_double("student.momentum",
                            T(&ExperimentConfig::student_train, &train::TrainConfig::momentum)));
    f.push_back(
        make_double("student.clip", T(&ExperimentConfig::student_train, &train::TrainConfig::clip)));
    f.push_back(make_int("student.batch_size",
                         T(&ExperimentConfig::student_train, &train::TrainConfig::batch_size)));

    f.push_back(make_int("tse_train.epochs",
                         T(&ExperimentConfig::tse_train, &train::TrainConfig::epochs)));
    f.push_back(
        make_double("tse_train.lr", T(&ExperimentConfig::tse_train, &train::TrainConfig::lr)));
    f.push_back(make_double("tse_train.momentum",
                            T(&ExperimentConfig::tse_train, &train::TrainConfig::momentum)));
    f.push_back(
        make_double("tse_train.clip", T(&ExperimentConfig::tse_train, &train::TrainConfig::clip)));
    f.push_back(make_int("tse_train.batch_size",
                         T(&ExperimentConfig::tse_train, &train::TrainConfig::batch_size)));

    f.push_back(make_double_list("lambda_grid",
                                 [](ExperimentConfig& c) -> auto& { return c.lambda_grid; }));
    f.push_back(make_u64_list("seeds", [](ExperimentConfig& c) -> auto& { return c.seeds; }));
    f.push_back(make_string("outdir", [](ExperimentConfig& c) -> auto& { return c.outdir; }));
    f.push_back(make_int("beam", [](ExperimentConfig& c) -> auto& { return c.beam; }));

    std::sort(f.begin(), f.end(), [](const Field& a, const Field& b) { return a.key < b.key; });
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("config: unknown key \"" + key + "\"");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  tse.validate();
  teacher_train.validate();
  student_train.validate();
  tse_train.validate();
  if (lambda_grid.empty()) throw ConfigError("config: lambda_grid must be non-empty");
  for (double l : lambda_grid) {
    if (l < 0.0) throw ConfigError("config: lambda values must be >= 0");
  }
  if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  if (std::set<uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("config: seeds must be distinct");
  }
  if (outdir.empty()) throw ConfigError("config: outdir must be set");
  if (beam < 1) throw ConfigError("config: beam must be >= 1");
  if (model.k_vocab != corpus.k_vocab) {
    throw ConfigError("config: model vocabulary must match the corpus");
  }
  if (model.chunk < 1 || model.history < 0) {
    throw ConfigError("config: streaming variants need chunk >= 1 and history >= 0");
  }
}

std::string ExperimentConfig::canonical_text() const {
  ExperimentConfig copy = *this;  // field accessors want mutable refs
  std::ostringstream out;
  for (const Field& f : fields()) out << f.key << "=" << f.get(copy) << "\n";
  return out.str();
}

uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical_text()); }

ExperimentConfig default_config() { return ExperimentConfig{}; }

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("config: expected key=value, got \"" + assignment + "\"");
  }
  std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  find_field(key).set(cfg, value);
  // The recognizer's class count always tracks the corpus vocabulary.
  cfg.model.k_vocab = cfg.corpus.k_vocab;
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = default_config();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  for (const std::string& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace xd::config
