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
#include <utility>
#include <vector>

namespace xd::corpus {

using Signal = std::vector<double>;
using TokenSequence = std::vector<int>;

// Synthetic corpus layout. Signals are built from cosine waves of a
// frame_len-sample DCT frame, so a DCT feature frontend with window ==
// frame_len recovers the construction coordinates. Each token 1..K-1 owns
// a frequency band of 1 + d_sig coordinates: a pilot carrying token
// identity (speaker-independent) plus d_sig body coordinates carrying the
// speaker's signature. The token sequence is linearly decodable from the
// pilots alone, while deciding WHICH talker uttered a token requires
// matching the band body against the enrollment signature — an elementwise
// product followed by a linear readout, i.e. exactly the computation that
// multiplicative speaker conditioning makes cheap.
struct CorpusConfig {
  int k_vocab = 6;    // including blank id 0; tokens are 1..k_vocab-1
  int d_sig = 5;      // signature dimensions; 2^d_sig >= total speakers
  int frame_len = 32; // DCT frame holding the bands (= feature window)
  int seg_len = 64;   // samples per token segment; multiple of frame_len

  double sig_gain = 1.0;    // speaker component amplitude
  double jitter = 0.02;     // per-sample Gaussian jitter amplitude
  double gain_jitter = 0.1; // per-speaker token gain in [1-gj, 1+gj]

  int train_speakers = 12;
  int dev_speakers = 4;
  int test_speakers = 4;
  // Explicit speaker id bases; -1 means "pack consecutively". Exposed so
  // misconfigured overlapping pools are detectable and rejected.
  int train_speaker_base = -1;
  int dev_speaker_base = -1;
  int test_speaker_base = -1;

  int train_records = 240;
  int dev_records = 48;
  int eval_per_snr = 32;

  int tokens_min = 3;
  int tokens_max = 8;
  int enroll_tokens = 4;

  double sir_min = -5.0;
  double sir_max = 5.0;
  double snr_min = 0.0;
  double snr_max = 20.0;
  std::vector<int> eval_snrs = {0, 5, 10, 15, 20};
};

struct SpeakerProfile {
  int speaker_id = -1;
  // Unit-norm code vector with entries ±1/sqrt(d_sig); codes are distinct
  // across all speakers, so any two signatures disagree in at least one
  // coordinate and the worst-case signature correlation is (d_sig-2)/d_sig.
  std::vector<double> signature;
  std::vector<double> token_gains;  // k_vocab entries; [0] unused (blank)
};

struct Utterance {
  int speaker_id = -1;
  TokenSequence tokens;
  Signal signal;
};

// One parallel training/eval example: the two-talker mixture and the
// single-talker target_plus_noise share the same target utterance and the
// same noise realization and differ only by the added interference.
struct MixtureRecord {
  Signal mixture;            // target + interference + noise
  Signal target_plus_noise;  // target + noise
  Signal target_clean;       // target only
  Signal enrollment;         // different utterance by the target speaker
  TokenSequence transcript;  // target token sequence
  double sir_db = 0.0;
  double snr_db = 0.0;
  int speaker_id = -1;
};

struct Dataset {
  std::vector<MixtureRecord> train;
  std::vector<MixtureRecord> dev;
  // Evaluation subsets at fixed SNR, in config order; equal sizes.
  std::vector<std::pair<int, std::vector<MixtureRecord>>> test_by_snr;
};

double mean_power(const Signal& s);

// Background padded with zeros / truncated to foreground length, then
// scaled so 10*log10(P_fore / P_back_scaled) == ratio_db.
Signal scale_to_ratio(const Signal& foreground, const Signal& background, double ratio_db);
Signal mix_at_ratio(const Signal& foreground, const Signal& background, double ratio_db);

class CorpusBuilder {
 public:
  CorpusBuilder(const CorpusConfig& config, uint64_t seed);

  const CorpusConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }

  // Deterministic in speaker_id alone (given builder config+seed).
  SpeakerProfile profile(int speaker_id) const;

  Utterance synthesize_utterance(const SpeakerProfile& profile, const TokenSequence& tokens,
                                 uint64_t rng_seed) const;

  // Record generation is pure in (split_tag, index), so records can be
  // produced in any order or in parallel. fixed_snr < 0 draws from range.
  MixtureRecord make_record(uint64_t split_tag, int index, int pool_base, int pool_size,
                            double fixed_snr) const;

  Dataset build_dataset() const;

  // Direct access to the orthonormal world basis (used by tests).
  const std::vector<double>& token_wave(int token) const;
  const std::vector<double>& sig_basis(int token, int d) const;

  // DCT coordinate of token k's pilot; body occupies the next d_sig coords.
  int band_start(int token) const { return 1 + (token - 1) * (1 + cfg_.d_sig); }

 private:
  void speaker_pools(int* train_base, int* dev_base, int* test_base) const;

  CorpusConfig cfg_;
  uint64_t seed_;
  // (k_vocab-1) * (1 + d_sig) orthonormal rows of length seg_len: cosine
  // waves of the frame_len DCT basis, tiled across the segment.
  std::vector<std::vector<double>> basis_;
  // Shuffled assignment of binary signature codes to speaker ids.
  std::vector<uint32_t> codes_;
};

inline Dataset build_dataset(const CorpusConfig& config, uint64_t seed) {
  return CorpusBuilder(config, seed).build_dataset();
}

// Split files: header (magic, version, config echo, seed, K, count), then
// length-prefixed records; f32 samples, u32 token ids.
void save_split(const std::string& path, const std::string& config_echo, uint64_t seed, int k_vocab,
                const std::vector<MixtureRecord>& records);
std::vector<MixtureRecord> load_split(const std::string& path, std::string* config_echo = nullptr,
                                      uint64_t* seed = nullptr, int* k_vocab = nullptr);

// Writes train.bin, dev.bin, test_snr{..}.bin into dir.
void save_dataset(const std::string& dir, const std::string& config_echo, uint64_t seed,
                  int k_vocab, const Dataset& ds);
Dataset load_dataset(const std::string& dir, const std::vector<int>& eval_snrs);

}  // namespace xd::corpus
