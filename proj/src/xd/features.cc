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

#include "xd/features.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "xd/error.h"

namespace xd::model {

// thread_local: callers may run on worker threads concurrently.
const std::vector<double>& dct_basis(int window) {
  thread_local std::vector<double> cache;
  thread_local int cached_window = -1;
  if (cached_window != window) {
    cache.assign(static_cast<size_t>(window) * window, 0.0);
    double pi = std::acos(-1.0);
    for (int j = 0; j < window; ++j) {
      double s = std::sqrt((j == 0 ? 1.0 : 2.0) / window);
      for (int i = 0; i < window; ++i)
        cache[static_cast<size_t>(j) * window + i] = s * std::cos(pi * (i + 0.5) * j / window);
    }
    cached_window = window;
  }
  return cache;
}

FeatureSequence extract_features(const Signal& signal, int window, int hop) {
  if (window < 1 || hop < 1) throw ConfigError("extract_features: window/hop must be >= 1");
  if (static_cast<int>(signal.size()) < window)
    throw ConfigError("extract_features: signal shorter than one window");
  int t_frames = (static_cast<int>(signal.size()) - window) / hop + 1;
  const auto& basis = dct_basis(window);

  FeatureSequence out;
  out.window = window;
  out.hop = hop;
  out.frames = Array({t_frames, window});
  for (int t = 0; t < t_frames; ++t) {
    const double* x = &signal[static_cast<size_t>(t) * hop];
    double power = 0.0;
    for (int i = 0; i < window; ++i) power += x[i] * x[i];
    double rms = std::sqrt(power / window);
    double* row = &out.frames.v[static_cast<int64_t>(t) * window];
    if (rms == 0.0) continue;  // silent frame: all-zero features
    for (int j = 0; j < window; ++j) {
      double c = 0.0;
      const double* b = &basis[static_cast<size_t>(j) * window];
      for (int i = 0; i < window; ++i) c += x[i] * b[i];
      row[j] = c / rms;
    }
  }
  return out;
}

Array subsample_frames(const Array& frames, int factor) {
  if (factor < 1) throw ConfigError("subsample_frames: factor must be >= 1");
  if (frames.ndim() != 2) throw ConfigError("subsample_frames: expected 2-D frames");
  if (factor == 1) return frames;
  int t_in = frames.rows(), f = frames.cols();
  int t_out = (t_in + factor - 1) / factor;
  Array out({t_out, f});
  for (int t = 0; t < t_out; ++t) {
    int lo = t * factor;
    int hi = std::min(t_in, lo + factor);
    for (int j = 0; j < f; ++j) {
      double s = 0.0;
      for (int i = lo; i < hi; ++i) s += frames.v[static_cast<int64_t>(i) * f + j];
      out.v[static_cast<int64_t>(t) * f + j] = s / (hi - lo);
    }
  }
  return out;
}

}  // namespace xd::model
