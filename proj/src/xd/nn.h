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

#include <string>

#include "xd/tape.h"

namespace xd::diff {

// Parameter registration + forward helpers for the small layer types the
// models share. Each helper owns its parameter naming: an affine layer at
// prefix "p" uses "p.w" [in,out] and "p.b" [out].

void add_affine(ParamStore& ps, const std::string& prefix, int in, int out, double stddev,
                uint64_t seed, const std::string& group);
// Affine whose weight starts at identity (on the leading min(in,out)
// diagonal) plus small noise, so the layer begins as a pass-through and
// training only has to learn the deviation from it.
void add_affine_eye(ParamStore& ps, const std::string& prefix, int in, int out, double noise,
                    uint64_t seed, const std::string& group);
Var affine(Tape& t, Var x, const std::string& prefix);

// Single-head scaled dot-product attention block with residual connections:
//   attn_out = x + (masked_softmax(q k^T / sqrt(h)) v) Wo
//   out      = attn_out + W2 tanh(W1 attn_out)
// Parameters: {prefix}.{wq,wk,wv,wo,ff1,ff2} affine layers, all h x h
// except ff1 (h x ff) and ff2 (ff x h).
void add_attention_block(ParamStore& ps, const std::string& prefix, int h, int ff, double stddev,
                         uint64_t seed, const std::string& group);
Var attention_block(Tape& t, Var x, const AttnMask& mask, const std::string& prefix);

// Gated recurrent step (update gate only, no reset gate):
//   z  = sigmoid(x Wz + h Uz + bz)
//   c  = tanh(x Wc + h Uc + bc)
//   h' = z * h + (1 - z) * c
// x and h are [1, dim] rows. Parameters: {prefix}.{wz,uz,wc,uc} [dim,dim]
// and {prefix}.{bz,bc} [dim].
void add_gated_cell(ParamStore& ps, const std::string& prefix, int in, int dim, double stddev,
                    uint64_t seed, const std::string& group);
Var gated_step(Tape& t, Var x, Var h, const std::string& prefix);

}  // namespace xd::diff
