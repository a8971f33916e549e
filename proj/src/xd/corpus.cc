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

#include "xd/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "xd/error.h"
#include "xd/io.h"
#include "xd/rng.h"
#include "xd/threads.h"

namespace xd::corpus {

namespace {

// Sub-seed tags so every random decision has its own stream.
constexpr uint64_t kTagCodes = 0x1d0c5eed;
constexpr uint64_t kTagSpeaker = 0x5bea6e0;
constexpr uint64_t kTagTrain = 1;
constexpr uint64_t kTagDev = 2;
constexpr uint64_t kTagTestBase = 100;  // +snr per eval condition

constexpr char kSplitMagic[8] = {'X', 'D', 'C', 'O', 'R', 'P', 'S', '1'};

}  // namespace

double mean_power(const Signal& s) {
  if (s.empty()) throw ConfigError("mean_power: empty signal");
  double acc = 0.0;
  for (double x : s) acc += x * x;
  return acc / static_cast<double>(s.size());
}

Signal scale_to_ratio(const Signal& foreground, const Signal& background, double ratio_db) {
  if (foreground.empty() || background.empty())
    throw ConfigError("scale_to_ratio: empty signal");
  Signal aligned(foreground.size(), 0.0);
  size_t n = std::min(foreground.size(), background.size());
  std::copy(background.begin(), background.begin() + n, aligned.begin());
  double p_fore = mean_power(foreground);
  double p_back = mean_power(aligned);
  if (p_fore <= 0.0 || p_back <= 0.0)
    throw ConfigError("scale_to_ratio: zero-power signal, ratio undefined");
  // Solve 10*log10(p_fore / (alpha^2 p_back)) = ratio_db.
  double alpha = std::sqrt(p_fore / (p_back * std::pow(10.0, ratio_db / 10.0)));
  for (double& x : aligned) x *= alpha;
  return aligned;
}

Signal mix_at_ratio(const Signal& foreground, const Signal& background, double ratio_db) {
  Signal scaled = scale_to_ratio(foreground, background, ratio_db);
  for (size_t i = 0; i < scaled.size(); ++i) scaled[i] = foreground[i] + scaled[i];
  return scaled;
}

CorpusBuilder::CorpusBuilder(const CorpusConfig& config, uint64_t seed)
    : cfg_(config), seed_(seed) {
  if (cfg_.k_vocab < 2) throw ConfigError("corpus: k_vocab must be >= 2");
  if (cfg_.d_sig < 1 || cfg_.d_sig > 16)
    throw ConfigError("corpus: d_sig must be in [1, 16]");
  if (cfg_.tokens_min < 1 || cfg_.tokens_max < cfg_.tokens_min)
    throw ConfigError("corpus: bad token length range");
  if (cfg_.frame_len < 2) throw ConfigError("corpus: frame_len must be >= 2");
  if (cfg_.seg_len < cfg_.frame_len || cfg_.seg_len % cfg_.frame_len != 0)
    throw ConfigError("corpus: seg_len must be a positive multiple of frame_len");
  int rows = (cfg_.k_vocab - 1) * (1 + cfg_.d_sig);
  // Coordinate 0 (DC) is left for noise only, hence the 1 + rows bound.
  if (1 + rows > cfg_.frame_len)
    throw ConfigError("corpus: 1 + (k_vocab-1)*(1+d_sig) exceeds frame_len; bands do not fit");

  // Basis row for DCT coordinate j: the orthonormal cosine of the frame_len
  // DCT-II basis, tiled across the segment and renormalized. A feature
  // frontend whose window equals frame_len and whose hop divides frame_len
  // then sees each band at fixed output coordinates.
  int tiles = cfg_.seg_len / cfg_.frame_len;
  double pi = std::acos(-1.0);
  double renorm = 1.0 / std::sqrt(static_cast<double>(tiles));
  auto cosine_row = [&](int j) {
    std::vector<double> row(cfg_.seg_len);
    double s = std::sqrt((j == 0 ? 1.0 : 2.0) / cfg_.frame_len) * renorm;
    for (int i = 0; i < cfg_.seg_len; ++i)
      row[i] = s * std::cos(pi * (i % cfg_.frame_len + 0.5) * j / cfg_.frame_len);
    return row;
  };
  basis_.reserve(rows);
  for (int j = 1; j <= rows; ++j) basis_.push_back(cosine_row(j));

  // Distinct signature codes: a seeded shuffle of all 2^d_sig sign patterns.
  codes_.resize(1u << cfg_.d_sig);
  for (uint32_t i = 0; i < codes_.size(); ++i) codes_[i] = i;
  Rng rng(Rng::mix(seed_, kTagCodes));
  for (size_t i = codes_.size(); i > 1; --i)
    std::swap(codes_[i - 1], codes_[rng.uniform_int(0, static_cast<int>(i) - 1)]);
}

const std::vector<double>& CorpusBuilder::token_wave(int token) const {
  if (token < 1 || token >= cfg_.k_vocab) throw ConfigError("token_wave: token out of range");
  return basis_[static_cast<size_t>(token - 1) * (1 + cfg_.d_sig)];
}

const std::vector<double>& CorpusBuilder::sig_basis(int token, int d) const {
  if (token < 1 || token >= cfg_.k_vocab) throw ConfigError("sig_basis: token out of range");
  if (d < 0 || d >= cfg_.d_sig) throw ConfigError("sig_basis: dimension out of range");
  return basis_[static_cast<size_t>(token - 1) * (1 + cfg_.d_sig) + 1 + d];
}

SpeakerProfile CorpusBuilder::profile(int speaker_id) const {
  if (speaker_id < 0) throw ConfigError("profile: negative speaker id");
  if (static_cast<size_t>(speaker_id) >= codes_.size())
    throw ConfigError("profile: speaker id exceeds the 2^d_sig distinct signature codes");
  Rng rng(Rng::mix(seed_, kTagSpeaker, static_cast<uint64_t>(speaker_id)));
  SpeakerProfile p;
  p.speaker_id = speaker_id;
  p.signature.resize(cfg_.d_sig);
  double inv = 1.0 / std::sqrt(static_cast<double>(cfg_.d_sig));
  for (int j = 0; j < cfg_.d_sig; ++j)
    p.signature[j] = (codes_[speaker_id] >> j & 1u) ? inv : -inv;
  p.token_gains.resize(cfg_.k_vocab, 0.0);
  for (int k = 1; k < cfg_.k_vocab; ++k)
    p.token_gains[k] = rng.uniform(1.0 - cfg_.gain_jitter, 1.0 + cfg_.gain_jitter);
  return p;
}

Utterance CorpusBuilder::synthesize_utterance(const SpeakerProfile& profile,
                                              const TokenSequence& tokens,
                                              uint64_t rng_seed) const {
  if (tokens.empty()) throw ConfigError("synthesize_utterance: empty token list");
  for (int tk : tokens)
    if (tk < 1 || tk >= cfg_.k_vocab)
      throw ConfigError("synthesize_utterance: token id out of range [1, K-1]");
  if (static_cast<int>(profile.signature.size()) != cfg_.d_sig)
    throw ConfigError("synthesize_utterance: profile signature dimension mismatch");

  Rng rng(rng_seed);
  Utterance utt;
  utt.speaker_id = profile.speaker_id;
  utt.tokens = tokens;
  utt.signal.resize(tokens.size() * static_cast<size_t>(cfg_.seg_len));
  size_t pos = 0;
  for (int tk : tokens) {
    const auto& wave = token_wave(tk);
    double gain = profile.token_gains[tk];
    // Pilot (token identity) plus the signature written into this token's
    // band body; bands are orthogonal cosine coordinates by construction.
    for (int s = 0; s < cfg_.seg_len; ++s) {
      double x = gain * wave[s];
      for (int d = 0; d < cfg_.d_sig; ++d)
        x += cfg_.sig_gain * profile.signature[d] * sig_basis(tk, d)[s];
      utt.signal[pos + s] = x + cfg_.jitter * rng.normal();
    }
    pos += cfg_.seg_len;
  }
  return utt;
}

void CorpusBuilder::speaker_pools(int* train_base, int* dev_base, int* test_base) const {
  if (cfg_.train_speakers < 2 || cfg_.dev_speakers < 2 || cfg_.test_speakers < 2)
    throw ConfigError("corpus: each split needs >= 2 speakers (target + interferer)");
  int tb = cfg_.train_speaker_base >= 0 ? cfg_.train_speaker_base : 0;
  int db = cfg_.dev_speaker_base >= 0 ? cfg_.dev_speaker_base : tb + cfg_.train_speakers;
  int eb = cfg_.test_speaker_base >= 0 ? cfg_.test_speaker_base : db + cfg_.dev_speakers;
  auto overlap = [](int a0, int an, int b0, int bn) { return a0 < b0 + bn && b0 < a0 + an; };
  if (overlap(tb, cfg_.train_speakers, db, cfg_.dev_speakers) ||
      overlap(tb, cfg_.train_speakers, eb, cfg_.test_speakers) ||
      overlap(db, cfg_.dev_speakers, eb, cfg_.test_speakers))
    throw ConfigError("corpus: speaker id ranges overlap across splits");
  int max_id = std::max({tb + cfg_.train_speakers, db + cfg_.dev_speakers,
                         eb + cfg_.test_speakers});
  if (static_cast<size_t>(max_id) > codes_.size())
    throw ConfigError("corpus: more speakers than 2^d_sig distinct signature codes");
  *train_base = tb;
  *dev_base = db;
  *test_base = eb;
}

MixtureRecord CorpusBuilder::make_record(uint64_t split_tag, int index, int pool_base,
                                         int pool_size, double fixed_snr) const {
  if (pool_size < 2) throw ConfigError("make_record: speaker pool too small");
  Rng rng(Rng::mix(seed_, split_tag, static_cast<uint64_t>(index)));

  int target_id = pool_base + rng.uniform_int(0, pool_size - 1);
  int interf_id = target_id;
  while (interf_id == target_id) interf_id = pool_base + rng.uniform_int(0, pool_size - 1);
  SpeakerProfile target_prof = profile(target_id);
  SpeakerProfile interf_prof = profile(interf_id);

  int n_tokens = rng.uniform_int(cfg_.tokens_min, cfg_.tokens_max);
  auto draw_tokens = [&](int count) {
    TokenSequence t(count);
    for (int& x : t) x = rng.uniform_int(1, cfg_.k_vocab - 1);
    return t;
  };
  TokenSequence target_tokens = draw_tokens(n_tokens);
  // Same token count for the interferer: both talkers span the whole
  // utterance (full overlap).
  TokenSequence interf_tokens = draw_tokens(n_tokens);
  TokenSequence enroll_tokens = draw_tokens(cfg_.enroll_tokens);

  uint64_t utt_seed = rng.next_u64();
  uint64_t interf_seed = rng.next_u64();
  uint64_t enroll_seed = rng.next_u64();
  double sir = rng.uniform(cfg_.sir_min, cfg_.sir_max);
  double snr = fixed_snr >= 0.0 ? fixed_snr : rng.uniform(cfg_.snr_min, cfg_.snr_max);

  Utterance target = synthesize_utterance(target_prof, target_tokens, utt_seed);
  Utterance interf = synthesize_utterance(interf_prof, interf_tokens, interf_seed);
  Utterance enroll = synthesize_utterance(target_prof, enroll_tokens, enroll_seed);

  Signal noise(target.signal.size());
  for (double& x : noise) x = rng.normal();

  Signal interf_scaled = scale_to_ratio(target.signal, interf.signal, sir);
  Signal noise_scaled = scale_to_ratio(target.signal, noise, snr);

  MixtureRecord rec;
  rec.speaker_id = target_id;
  rec.transcript = target_tokens;
  rec.target_clean = target.signal;
  rec.enrollment = std::move(enroll.signal);
  rec.sir_db = sir;
  rec.snr_db = snr;
  rec.target_plus_noise.resize(target.signal.size());
  rec.mixture.resize(target.signal.size());
  for (size_t i = 0; i < target.signal.size(); ++i) {
    rec.target_plus_noise[i] = target.signal[i] + noise_scaled[i];
    // Parallel construction: mixture is exactly target_plus_noise plus the
    // scaled interference (same noise realization on both sides).
    rec.mixture[i] = rec.target_plus_noise[i] + interf_scaled[i];
  }
  return rec;
}

Dataset CorpusBuilder::build_dataset() const {
  int train_base = 0, dev_base = 0, test_base = 0;
  speaker_pools(&train_base, &dev_base, &test_base);

  Dataset ds;
  auto fill = [&](std::vector<MixtureRecord>& out, uint64_t tag, int count, int base, int size,
                  double fixed_snr) {
    out.resize(count);
    xd::parallel_for(count, [&](int64_t i) {
      out[i] = make_record(tag, static_cast<int>(i), base, size, fixed_snr);
    });
  };
  fill(ds.train, kTagTrain, cfg_.train_records, train_base, cfg_.train_speakers, -1.0);
  fill(ds.dev, kTagDev, cfg_.dev_records, dev_base, cfg_.dev_speakers, -1.0);
  for (int snr : cfg_.eval_snrs) {
    std::vector<MixtureRecord> recs;
    fill(recs, kTagTestBase + static_cast<uint64_t>(snr), cfg_.eval_per_snr, test_base,
         cfg_.test_speakers, static_cast<double>(snr));
    ds.test_by_snr.emplace_back(snr, std::move(recs));
  }
  return ds;
}

namespace {

void put_signal(std::ostream& os, const Signal& s) {
  io::put_u32(os, static_cast<uint32_t>(s.size()));
  for (double x : s) io::put_f32(os, static_cast<float>(x));
}

Signal get_signal(std::istream& is) {
  uint32_t n = io::get_u32(is);
  if (n > (1u << 26)) throw ConfigError("implausible signal length in split file");
  Signal s(n);
  for (uint32_t i = 0; i < n; ++i) s[i] = static_cast<double>(io::get_f32(is));
  return s;
}

}  // namespace

void save_split(const std::string& path, const std::string& config_echo, uint64_t seed,
                int k_vocab, const std::vector<MixtureRecord>& records) {
  std::string tmp = path + ".tmp";
  {
    auto os = io::open_out(tmp);
    os.write(kSplitMagic, 8);
    io::put_str(os, config_echo);
    io::put_u64(os, seed);
    io::put_u32(os, static_cast<uint32_t>(k_vocab));
    io::put_u32(os, static_cast<uint32_t>(records.size()));
    for (const auto& r : records) {
      put_signal(os, r.mixture);
      put_signal(os, r.target_plus_noise);
      put_signal(os, r.target_clean);
      put_signal(os, r.enrollment);
      io::put_u32(os, static_cast<uint32_t>(r.transcript.size()));
      for (int tk : r.transcript) io::put_u32(os, static_cast<uint32_t>(tk));
      io::put_f64(os, r.sir_db);
      io::put_f64(os, r.snr_db);
      io::put_u32(os, static_cast<uint32_t>(r.speaker_id));
    }
    if (!os) throw ConfigError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ConfigError("cannot move split into place: " + path);
}

std::vector<MixtureRecord> load_split(const std::string& path, std::string* config_echo,
                                      uint64_t* seed, int* k_vocab) {
  auto is = io::open_in(path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kSplitMagic, 8) != 0)
    throw ConfigError("not a corpus split file: " + path);
  std::string echo = io::get_str(is);
  uint64_t sd = io::get_u64(is);
  int kv = static_cast<int>(io::get_u32(is));
  uint32_t count = io::get_u32(is);
  if (config_echo) *config_echo = echo;
  if (seed) *seed = sd;
  if (k_vocab) *k_vocab = kv;
  std::vector<MixtureRecord> out(count);
  for (uint32_t i = 0; i < count; ++i) {
    MixtureRecord& r = out[i];
    r.mixture = get_signal(is);
    r.target_plus_noise = get_signal(is);
    r.target_clean = get_signal(is);
    r.enrollment = get_signal(is);
    uint32_t nt = io::get_u32(is);
    if (nt > (1u << 20)) throw ConfigError("implausible transcript length in split file");
    r.transcript.resize(nt);
    for (uint32_t j = 0; j < nt; ++j) r.transcript[j] = static_cast<int>(io::get_u32(is));
    r.sir_db = io::get_f64(is);
    r.snr_db = io::get_f64(is);
    r.speaker_id = static_cast<int>(io::get_u32(is));
  }
  if (!is) throw ConfigError("truncated split file: " + path);
  return out;
}

void save_dataset(const std::string& dir, const std::string& config_echo, uint64_t seed,
                  int k_vocab, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  save_split(dir + "/train.bin", config_echo, seed, k_vocab, ds.train);
  save_split(dir + "/dev.bin", config_echo, seed, k_vocab, ds.dev);
  for (const auto& [snr, recs] : ds.test_by_snr)
    save_split(dir + "/test_snr" + std::to_string(snr) + ".bin", config_echo, seed, k_vocab, recs);
}

Dataset load_dataset(const std::string& dir, const std::vector<int>& eval_snrs) {
  Dataset ds;
  ds.train = load_split(dir + "/train.bin");
  ds.dev = load_split(dir + "/dev.bin");
  for (int snr : eval_snrs)
    ds.test_by_snr.emplace_back(snr, load_split(dir + "/test_snr" + std::to_string(snr) + ".bin"));
  return ds;
}

}  // namespace xd::corpus
