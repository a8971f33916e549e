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

#include <vector>

#include "xd/array.h"
#include "xd/corpus.h"

namespace xd::model {

using corpus::Signal;
using corpus::TokenSequence;

// Orthonormal DCT-II basis, cached per window size (single size in
// practice). basis[j*window + i] = s_j * cos(pi * (i + 0.5) * j / window);
// rows are orthonormal, so the matrix is its own inverse transposed.
const std::vector<double>& dct_basis(int window);

// Unlearned front end: overlapping rectangular frames, orthonormal DCT-II
// projection, per-frame RMS normalization. Scaling the whole signal by a
// power of two leaves the output bit-identical (the normalization divides
// it out exactly).
struct FeatureSequence {
  Array frames;  // [T', window]
  int window = 0;
  int hop = 0;
};

FeatureSequence extract_features(const Signal& signal, int window, int hop);

// Mean-pools groups of `factor` consecutive frames (last group may be
// smaller). Rows become ceil(T'/factor). factor 1 is the identity.
Array subsample_frames(const Array& frames, int factor);

}  // namespace xd::model
