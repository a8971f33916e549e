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
// Independent reference implementations the tests compare against. These
// deliberately use the slowest most-literal formulation of each quantity
// (path enumeration, triple loops, plain recursion) so a shared bug with
// the production code is implausible.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xd/params.h"
#include "xd/rng.h"
#include "xd/transducer.h"

namespace oracle {

inline double logsumexp2(double a, double b) {
  double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Transducer NLL by explicit enumeration of every monotone alignment:
// from cell (t,u) a blank moves to (t+1,u), label y[u] moves to (t,u+1);
// a path terminates by emitting blank from (T-1,U). Feasible only because
// the tests keep T,U tiny (path count C(T-1+U, U)).
inline double rnnt_nll_bruteforce(const xd::model::PosteriorLattice& lat,
                                  const std::vector<int>& y) {
  const int T = lat.T, U = lat.U;
  double total = -std::numeric_limits<double>::infinity();
  std::function<void(int, int, double)> walk = [&](int t, int u, double lp) {
    if (t == T - 1 && u == U) total = logsumexp2(total, lp + lat.log_prob(t, u, 0));
    if (t < T - 1) walk(t + 1, u, lp + lat.log_prob(t, u, 0));
    if (u < U) walk(t, u + 1, lp + lat.log_prob(t, u, y[u]));
  };
  walk(0, 0, 0.0);
  return -total;
}

// KD cross-entropy as the literal triple sum over (t, u, k).
inline double kd_naive(const xd::model::PosteriorLattice& teacher,
                       const xd::model::PosteriorLattice& student) {
  double s = 0.0;
  for (int t = 0; t < teacher.T; ++t)
    for (int u = 0; u <= teacher.U; ++u)
      for (int k = 0; k < teacher.K; ++k)
        s -= teacher.prob(t, u, k) * student.log_prob(t, u, k);
  return s;
}

// Levenshtein distance straight from the recursive definition.
inline int edit_naive(const std::vector<int>& a, const std::vector<int>& b, size_t i = 0,
                      size_t j = 0) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  int best = edit_naive(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
  best = std::min(best, edit_naive(a, b, i + 1, j) + 1);
  best = std::min(best, edit_naive(a, b, i, j + 1) + 1);
  return best;
}

// Random lattice of valid log-probabilities (each (t,u) row normalized).
inline xd::model::PosteriorLattice random_lattice(int T, int U, int K, xd::Rng& rng) {
  xd::model::PosteriorLattice lat;
  lat.T = T;
  lat.U = U;
  lat.K = K;
  lat.log_probs = xd::Array({T * (U + 1), K});
  for (int r = 0; r < T * (U + 1); ++r) {
    double z = 0.0;
    std::vector<double> e(K);
    for (int k = 0; k < K; ++k) {
      e[k] = std::exp(rng.normal());
      z += e[k];
    }
    for (int k = 0; k < K; ++k)
      lat.log_probs.v[static_cast<int64_t>(r) * K + k] = std::log(e[k] / z);
  }
  return lat;
}

inline std::vector<int> random_transcript(int U, int K, xd::Rng& rng) {
  std::vector<int> y(U);
  for (int u = 0; u < U; ++u) y[u] = rng.uniform_int(1, K - 1);
  return y;
}

// ---- central finite differences ---------------------------------------

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst;  // "name[i]" of the worst entry
};

inline double rel_err(double num, double ana) {
  double denom = std::max({std::fabs(num), std::fabs(ana), 1e-3});
  return std::fabs(num - ana) / denom;
}

// Central differences against the analytic gradients already accumulated
// in `ps` for the listed names. `loss` must recompute the scalar from the
// store's current values (fresh tape per call). `stride` subsamples large
// tensors (always including entry 0).
inline FdReport fd_check_params(xd::diff::ParamStore& ps, const std::vector<std::string>& names,
                                const std::function<double()>& loss, double eps = 1e-5,
                                int stride = 1) {
  FdReport rep;
  for (const std::string& name : names) {
    xd::Array& value = ps.value(name);
    const xd::Array& grad = ps.grad(name);
    for (int64_t i = 0; i < value.numel(); i += stride) {
      double keep = value.v[i];
      value.v[i] = keep + eps;
      double up = loss();
      value.v[i] = keep - eps;
      double down = loss();
      value.v[i] = keep;
      double num = (up - down) / (2.0 * eps);
      double err = rel_err(num, grad.v[i]);
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

// Same, for a loss that is a function of one input array (lattices etc.).
inline FdReport fd_check_array(xd::Array& x, const xd::Array& grad,
                               const std::function<double()>& loss, double eps = 1e-5,
                               int stride = 1) {
  FdReport rep;
  for (int64_t i = 0; i < x.numel(); i += stride) {
    double keep = x.v[i];
    x.v[i] = keep + eps;
    double up = loss();
    x.v[i] = keep - eps;
    double down = loss();
    x.v[i] = keep;
    double num = (up - down) / (2.0 * eps);
    double err = rel_err(num, grad.v[i]);
    if (err > rep.max_rel_err) {
      rep.max_rel_err = err;
      rep.worst = "x[" + std::to_string(i) + "]";
    }
  }
  return rep;
}

inline xd::Array random_array(std::vector<int> shape, xd::Rng& rng, double scale = 1.0) {
  xd::Array a(std::move(shape));
  for (auto& v : a.v) v = scale * rng.normal();
  return a;
}

}  // namespace oracle
