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

#include "xd/tape.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "xd/error.h"

namespace xd::diff {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool same_shape(const Array& a, const Array& b) { return a.shape == b.shape; }

}  // namespace

Var Tape::make(Array val, bool needs_grad, std::function<void()> back) {
  if (used_) throw ConfigError("tape already backpropagated; build a new tape");
  Node n;
  n.grad = Array(val.shape);
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ConfigError("Var does not belong to this tape");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ConfigError("Var does not belong to this tape");
  return nodes_[v.id];
}

void Tape::check2d(Var v, const char* op) const {
  if (node(v).val.ndim() != 2)
    throw ConfigError(std::string(op) + ": expected 2-D input, got shape " +
                      node(v).val.shape_str());
}

const Array& Tape::val(Var v) const { return node(v).val; }
const Array& Tape::grad_of(Var v) const { return node(v).grad; }

Var Tape::constant(Array a) { return make(std::move(a), false, {}); }

Var Tape::input(Array a) {
  return make(std::move(a), true, []() {});
}

Var Tape::param(const std::string& name) {
  if (!store_) throw ConfigError("tape has no ParamStore bound");
  const Array& value = store_->value(name);
  if (store_->is_frozen(name)) return constant(value);
  int pid = static_cast<int>(param_names_.size());
  param_names_.push_back(name);
  Var out{static_cast<int>(nodes_.size())};
  return make(value, true, [this, out, pid]() {
    const std::string& nm = param_names_[pid];
    if (grad_sink_) {
      auto it = grad_sink_->find(nm);
      if (it == grad_sink_->end())
        it = grad_sink_->emplace(nm, Array(nodes_[out.id].grad.shape)).first;
      add_into(it->second, nodes_[out.id].grad);
    } else {
      add_into(store_->grad(nm), nodes_[out.id].grad);
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Array& av = node(a).val;
  const Array& bv = node(b).val;
  if (!same_shape(av, bv))
    throw ConfigError("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = av.v[i] + bv.v[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, b, out]() {
    const Array& g = nodes_[out.id].grad;
    if (nodes_[a.id].needs_grad) add_into(nodes_[a.id].grad, g);
    if (nodes_[b.id].needs_grad) add_into(nodes_[b.id].grad, g);
  });
}

Var Tape::sub(Var a, Var b) {
  const Array& av = node(a).val;
  const Array& bv = node(b).val;
  if (!same_shape(av, bv))
    throw ConfigError("sub: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = av.v[i] - bv.v[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, b, out]() {
    const Array& g = nodes_[out.id].grad;
    if (nodes_[a.id].needs_grad) add_into(nodes_[a.id].grad, g);
    if (nodes_[b.id].needs_grad) axpy_into(nodes_[b.id].grad, -1.0, g);
  });
}

Var Tape::mul(Var a, Var b) {
  const Array& av = node(a).val;
  const Array& bv = node(b).val;
  if (!same_shape(av, bv))
    throw ConfigError("mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = av.v[i] * bv.v[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, b, out]() {
    const Array& g = nodes_[out.id].grad;
    if (nodes_[a.id].needs_grad) {
      Array& ga = nodes_[a.id].grad;
      const Array& bv2 = nodes_[b.id].val;
      for (int64_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * bv2.v[i];
    }
    if (nodes_[b.id].needs_grad) {
      Array& gb = nodes_[b.id].grad;
      const Array& av2 = nodes_[a.id].val;
      for (int64_t i = 0; i < g.numel(); ++i) gb.v[i] += g.v[i] * av2.v[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  const Array& av = node(a).val;
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = c * av.v[i];
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, c, out]() {
    axpy_into(nodes_[a.id].grad, c, nodes_[out.id].grad);
  });
}

Var Tape::add_const(Var a, double c) {
  const Array& av = node(a).val;
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = av.v[i] + c;
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out]() {
    add_into(nodes_[a.id].grad, nodes_[out.id].grad);
  });
}

Var Tape::one_minus(Var a) {
  const Array& av = node(a).val;
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = 1.0 - av.v[i];
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out]() {
    axpy_into(nodes_[a.id].grad, -1.0, nodes_[out.id].grad);
  });
}

Var Tape::tanh_op(Var a) {
  const Array& av = node(a).val;
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = std::tanh(av.v[i]);
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out]() {
    const Array& g = nodes_[out.id].grad;
    const Array& yv = nodes_[out.id].val;
    Array& ga = nodes_[a.id].grad;
    for (int64_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * (1.0 - yv.v[i] * yv.v[i]);
  });
}

Var Tape::sigmoid_op(Var a) {
  const Array& av = node(a).val;
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) {
    double x = av.v[i];
    // Branch on sign to avoid overflow in exp.
    y.v[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out]() {
    const Array& g = nodes_[out.id].grad;
    const Array& yv = nodes_[out.id].val;
    Array& ga = nodes_[a.id].grad;
    for (int64_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * yv.v[i] * (1.0 - yv.v[i]);
  });
}

Var Tape::exp_op(Var a) {
  const Array& av = node(a).val;
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = std::exp(av.v[i]);
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out]() {
    const Array& g = nodes_[out.id].grad;
    const Array& yv = nodes_[out.id].val;
    Array& ga = nodes_[a.id].grad;
    for (int64_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] * yv.v[i];
  });
}

Var Tape::log_op(Var a) {
  const Array& av = node(a).val;
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) {
    if (!(av.v[i] > 0.0)) throw NumericError("log of non-positive value");
    y.v[i] = std::log(av.v[i]);
  }
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out]() {
    const Array& g = nodes_[out.id].grad;
    const Array& av2 = nodes_[a.id].val;
    Array& ga = nodes_[a.id].grad;
    for (int64_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i] / av2.v[i];
  });
}

Var Tape::matmul(Var a, Var b) {
  check2d(a, "matmul");
  check2d(b, "matmul");
  const Array& av = node(a).val;
  const Array& bv = node(b).val;
  int m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw ConfigError("matmul: inner dims " + av.shape_str() + " x " + bv.shape_str());
  Array y({m, n});
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double aip = av.v[static_cast<int64_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv.v[static_cast<int64_t>(p) * n];
      double* yrow = &y.v[static_cast<int64_t>(i) * n];
      for (int j = 0; j < n; ++j) yrow[j] += aip * brow[j];
    }
  }
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, b, out, m, k, n]() {
    const Array& g = nodes_[out.id].grad;
    if (nodes_[a.id].needs_grad) {
      // dA = G * B^T
      Array& ga = nodes_[a.id].grad;
      const Array& bv2 = nodes_[b.id].val;
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = &g.v[static_cast<int64_t>(i) * n];
          const double* brow = &bv2.v[static_cast<int64_t>(p) * n];
          for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga.v[static_cast<int64_t>(i) * k + p] += s;
        }
    }
    if (nodes_[b.id].needs_grad) {
      // dB = A^T * G
      Array& gb = nodes_[b.id].grad;
      const Array& av2 = nodes_[a.id].val;
      for (int i = 0; i < m; ++i) {
        const double* grow = &g.v[static_cast<int64_t>(i) * n];
        for (int p = 0; p < k; ++p) {
          double aip = av2.v[static_cast<int64_t>(i) * k + p];
          if (aip == 0.0) continue;
          double* gbrow = &gb.v[static_cast<int64_t>(p) * n];
          for (int j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  check2d(a, "matmul_nt");
  check2d(b, "matmul_nt");
  const Array& av = node(a).val;
  const Array& bv = node(b).val;
  int m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k)
    throw ConfigError("matmul_nt: inner dims " + av.shape_str() + " x " + bv.shape_str() + "^T");
  Array y({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      const double* arow = &av.v[static_cast<int64_t>(i) * k];
      const double* brow = &bv.v[static_cast<int64_t>(j) * k];
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      y.v[static_cast<int64_t>(i) * n + j] = s;
    }
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, b, out, m, k, n]() {
    const Array& g = nodes_[out.id].grad;
    if (nodes_[a.id].needs_grad) {
      // dA = G * B
      Array& ga = nodes_[a.id].grad;
      const Array& bv2 = nodes_[b.id].val;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double gij = g.v[static_cast<int64_t>(i) * n + j];
          if (gij == 0.0) continue;
          double* garow = &ga.v[static_cast<int64_t>(i) * k];
          const double* brow = &bv2.v[static_cast<int64_t>(j) * k];
          for (int p = 0; p < k; ++p) garow[p] += gij * brow[p];
        }
    }
    if (nodes_[b.id].needs_grad) {
      // dB = G^T * A
      Array& gb = nodes_[b.id].grad;
      const Array& av2 = nodes_[a.id].val;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double gij = g.v[static_cast<int64_t>(i) * n + j];
          if (gij == 0.0) continue;
          double* gbrow = &gb.v[static_cast<int64_t>(j) * k];
          const double* arow = &av2.v[static_cast<int64_t>(i) * k];
          for (int p = 0; p < k; ++p) gbrow[p] += gij * arow[p];
        }
    }
  });
}

Var Tape::add_rows(Var a, Var bias) {
  check2d(a, "add_rows");
  const Array& av = node(a).val;
  const Array& bv = node(bias).val;
  if (bv.ndim() != 1 || bv.dim(0) != av.cols())
    throw ConfigError("add_rows: bias " + bv.shape_str() + " vs input " + av.shape_str());
  int m = av.rows(), n = av.cols();
  Array y({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      y.v[static_cast<int64_t>(i) * n + j] = av.v[static_cast<int64_t>(i) * n + j] + bv.v[j];
  bool ng = node(a).needs_grad || node(bias).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, bias, out, m, n]() {
    const Array& g = nodes_[out.id].grad;
    if (nodes_[a.id].needs_grad) add_into(nodes_[a.id].grad, g);
    if (nodes_[bias.id].needs_grad) {
      Array& gb = nodes_[bias.id].grad;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb.v[j] += g.v[static_cast<int64_t>(i) * n + j];
    }
  });
}

Var Tape::row_bcast_mul(Var a, Var r) {
  check2d(a, "row_bcast_mul");
  const Array& av = node(a).val;
  const Array& rv = node(r).val;
  if (rv.ndim() != 1 || rv.dim(0) != av.cols())
    throw ConfigError("row_bcast_mul: vector " + rv.shape_str() + " vs input " + av.shape_str());
  int m = av.rows(), n = av.cols();
  Array y({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      y.v[static_cast<int64_t>(i) * n + j] = av.v[static_cast<int64_t>(i) * n + j] * rv.v[j];
  bool ng = node(a).needs_grad || node(r).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, r, out, m, n]() {
    const Array& g = nodes_[out.id].grad;
    if (nodes_[a.id].needs_grad) {
      Array& ga = nodes_[a.id].grad;
      const Array& rv2 = nodes_[r.id].val;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          ga.v[static_cast<int64_t>(i) * n + j] += g.v[static_cast<int64_t>(i) * n + j] * rv2.v[j];
    }
    if (nodes_[r.id].needs_grad) {
      Array& gr = nodes_[r.id].grad;
      const Array& av2 = nodes_[a.id].val;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          gr.v[j] += g.v[static_cast<int64_t>(i) * n + j] * av2.v[static_cast<int64_t>(i) * n + j];
    }
  });
}

Var Tape::scale_bs(Var a, Var s) {
  const Array& av = node(a).val;
  const Array& sv = node(s).val;
  if (sv.numel() != 1) throw ConfigError("scale_bs: scalar expected, got " + sv.shape_str());
  double sc = sv.v[0];
  Array y(av.shape);
  for (int64_t i = 0; i < y.numel(); ++i) y.v[i] = sc * av.v[i];
  bool ng = node(a).needs_grad || node(s).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, s, out]() {
    const Array& g = nodes_[out.id].grad;
    double sc2 = nodes_[s.id].val.v[0];
    if (nodes_[a.id].needs_grad) axpy_into(nodes_[a.id].grad, sc2, g);
    if (nodes_[s.id].needs_grad) {
      const Array& av2 = nodes_[a.id].val;
      double acc = 0.0;
      for (int64_t i = 0; i < g.numel(); ++i) acc += g.v[i] * av2.v[i];
      nodes_[s.id].grad.v[0] += acc;
    }
  });
}

Var Tape::dot(Var a, Var b) {
  const Array& av = node(a).val;
  const Array& bv = node(b).val;
  if (!same_shape(av, bv))
    throw ConfigError("dot: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  double s = 0.0;
  for (int64_t i = 0; i < av.numel(); ++i) s += av.v[i] * bv.v[i];
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(Array::scalar(s), ng, [this, a, b, out]() {
    double g = nodes_[out.id].grad.v[0];
    if (nodes_[a.id].needs_grad) axpy_into(nodes_[a.id].grad, g, nodes_[b.id].val);
    if (nodes_[b.id].needs_grad) axpy_into(nodes_[b.id].grad, g, nodes_[a.id].val);
  });
}

Var Tape::weighted_sum(Var a, Array w) {
  const Array& av = node(a).val;
  if (!same_shape(av, w))
    throw ConfigError("weighted_sum: shape mismatch " + av.shape_str() + " vs " + w.shape_str());
  double s = 0.0;
  for (int64_t i = 0; i < av.numel(); ++i) s += w.v[i] * av.v[i];
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  auto wp = std::make_shared<Array>(std::move(w));
  return make(Array::scalar(s), ng, [this, a, out, wp]() {
    double g = nodes_[out.id].grad.v[0];
    axpy_into(nodes_[a.id].grad, g, *wp);
  });
}

Var Tape::pairwise_row_sum(Var a, Var b) {
  check2d(a, "pairwise_row_sum");
  check2d(b, "pairwise_row_sum");
  const Array& av = node(a).val;
  const Array& bv = node(b).val;
  if (av.cols() != bv.cols())
    throw ConfigError("pairwise_row_sum: column mismatch " + av.shape_str() + " vs " +
                      bv.shape_str());
  int m = av.rows(), n = bv.rows(), j = av.cols();
  Array y({m * n, j});
  for (int i = 0; i < m; ++i) {
    const double* arow = &av.v[static_cast<int64_t>(i) * j];
    for (int r = 0; r < n; ++r) {
      const double* brow = &bv.v[static_cast<int64_t>(r) * j];
      double* yrow = &y.v[(static_cast<int64_t>(i) * n + r) * j];
      for (int c = 0; c < j; ++c) yrow[c] = arow[c] + brow[c];
    }
  }
  bool ng = node(a).needs_grad || node(b).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, b, out, m, n, j]() {
    const Array& g = nodes_[out.id].grad;
    if (nodes_[a.id].needs_grad) {
      Array& ga = nodes_[a.id].grad;
      for (int i = 0; i < m; ++i) {
        double* garow = &ga.v[static_cast<int64_t>(i) * j];
        for (int r = 0; r < n; ++r) {
          const double* grow = &g.v[(static_cast<int64_t>(i) * n + r) * j];
          for (int c = 0; c < j; ++c) garow[c] += grow[c];
        }
      }
    }
    if (nodes_[b.id].needs_grad) {
      Array& gb = nodes_[b.id].grad;
      for (int i = 0; i < m; ++i)
        for (int r = 0; r < n; ++r) {
          double* gbrow = &gb.v[static_cast<int64_t>(r) * j];
          const double* grow = &g.v[(static_cast<int64_t>(i) * n + r) * j];
          for (int c = 0; c < j; ++c) gbrow[c] += grow[c];
        }
    }
  });
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  const Array& av = node(a).val;
  if (shape_numel(shape) != av.numel())
    throw ConfigError("reshape: element count mismatch for " + av.shape_str());
  Array y(shape);
  y.v = av.v;
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out]() {
    Array& ga = nodes_[a.id].grad;
    const Array& g = nodes_[out.id].grad;
    for (int64_t i = 0; i < g.numel(); ++i) ga.v[i] += g.v[i];
  });
}

Var Tape::concat_rows(Var a, Var b) { return concat_rows_many({a, b}); }

Var Tape::concat_rows_many(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_rows_many: no inputs");
  int n = -1, m = 0;
  for (Var p : parts) {
    check2d(p, "concat_rows");
    const Array& pv = node(p).val;
    if (n < 0) n = pv.cols();
    if (pv.cols() != n) throw ConfigError("concat_rows: column mismatch");
    m += pv.rows();
  }
  Array y({m, n});
  int64_t off = 0;
  bool ng = false;
  for (Var p : parts) {
    const Array& pv = node(p).val;
    std::copy(pv.v.begin(), pv.v.end(), y.v.begin() + off);
    off += pv.numel();
    ng = ng || node(p).needs_grad;
  }
  Var out{static_cast<int>(nodes_.size())};
  std::vector<Var> ps = parts;
  return make(std::move(y), ng, [this, ps, out]() {
    const Array& g = nodes_[out.id].grad;
    int64_t off2 = 0;
    for (Var p : ps) {
      Array& gp = nodes_[p.id].grad;
      if (nodes_[p.id].needs_grad)
        for (int64_t i = 0; i < gp.numel(); ++i) gp.v[i] += g.v[off2 + i];
      off2 += gp.numel();
    }
  });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  check2d(a, "slice_rows");
  const Array& av = node(a).val;
  if (r0 < 0 || r1 > av.rows() || r0 >= r1)
    throw ConfigError("slice_rows: bad range on " + av.shape_str());
  int n = av.cols();
  Array y({r1 - r0, n});
  std::copy(av.v.begin() + static_cast<int64_t>(r0) * n,
            av.v.begin() + static_cast<int64_t>(r1) * n, y.v.begin());
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, r0, out, n]() {
    const Array& g = nodes_[out.id].grad;
    Array& ga = nodes_[a.id].grad;
    int64_t base = static_cast<int64_t>(r0) * n;
    for (int64_t i = 0; i < g.numel(); ++i) ga.v[base + i] += g.v[i];
  });
}

Var Tape::mean_over_rows(Var a) {
  check2d(a, "mean_over_rows");
  const Array& av = node(a).val;
  int m = av.rows(), n = av.cols();
  Array y({n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y.v[j] += av.v[static_cast<int64_t>(i) * n + j];
  for (int j = 0; j < n; ++j) y.v[j] /= m;
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out, m, n]() {
    const Array& g = nodes_[out.id].grad;
    Array& ga = nodes_[a.id].grad;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.v[static_cast<int64_t>(i) * n + j] += g.v[j] / m;
  });
}

Var Tape::sub_mean_all(Var a) {
  const Array& av = node(a).val;
  int64_t n = av.numel();
  double mean = 0.0;
  for (int64_t i = 0; i < n; ++i) mean += av.v[i];
  mean /= static_cast<double>(n);
  Array y(av.shape);
  for (int64_t i = 0; i < n; ++i) y.v[i] = av.v[i] - mean;
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out, n]() {
    const Array& g = nodes_[out.id].grad;
    Array& ga = nodes_[a.id].grad;
    double gmean = 0.0;
    for (int64_t i = 0; i < n; ++i) gmean += g.v[i];
    gmean /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) ga.v[i] += g.v[i] - gmean;
  });
}

Var Tape::sum_all(Var a) {
  const Array& av = node(a).val;
  double s = 0.0;
  for (double x : av.v) s += x;
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(Array::scalar(s), ng, [this, a, out]() {
    double g = nodes_[out.id].grad.v[0];
    Array& ga = nodes_[a.id].grad;
    for (int64_t i = 0; i < ga.numel(); ++i) ga.v[i] += g;
  });
}

Var Tape::mean_all(Var a) {
  int64_t n = node(a).val.numel();
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var Tape::softmax_rows(Var a) {
  check2d(a, "softmax_rows");
  const Array& av = node(a).val;
  int m = av.rows(), n = av.cols();
  Array y({m, n});
  for (int i = 0; i < m; ++i) {
    const double* row = &av.v[static_cast<int64_t>(i) * n];
    double* yrow = &y.v[static_cast<int64_t>(i) * n];
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      yrow[j] = std::exp(row[j] - mx);
      z += yrow[j];
    }
    for (int j = 0; j < n; ++j) yrow[j] /= z;
  }
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out, m, n]() {
    const Array& g = nodes_[out.id].grad;
    const Array& yv = nodes_[out.id].val;
    Array& ga = nodes_[a.id].grad;
    for (int i = 0; i < m; ++i) {
      const double* grow = &g.v[static_cast<int64_t>(i) * n];
      const double* yrow = &yv.v[static_cast<int64_t>(i) * n];
      double dotv = 0.0;
      for (int j = 0; j < n; ++j) dotv += grow[j] * yrow[j];
      double* garow = &ga.v[static_cast<int64_t>(i) * n];
      for (int j = 0; j < n; ++j) garow[j] += yrow[j] * (grow[j] - dotv);
    }
  });
}

Var Tape::log_softmax_rows(Var a) {
  check2d(a, "log_softmax_rows");
  const Array& av = node(a).val;
  int m = av.rows(), n = av.cols();
  Array y({m, n});
  for (int i = 0; i < m; ++i) {
    const double* row = &av.v[static_cast<int64_t>(i) * n];
    double* yrow = &y.v[static_cast<int64_t>(i) * n];
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    double lz = mx + std::log(z);
    for (int j = 0; j < n; ++j) yrow[j] = row[j] - lz;
  }
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  return make(std::move(y), ng, [this, a, out, m, n]() {
    const Array& g = nodes_[out.id].grad;
    const Array& yv = nodes_[out.id].val;
    Array& ga = nodes_[a.id].grad;
    for (int i = 0; i < m; ++i) {
      const double* grow = &g.v[static_cast<int64_t>(i) * n];
      const double* yrow = &yv.v[static_cast<int64_t>(i) * n];
      double gsum = 0.0;
      for (int j = 0; j < n; ++j) gsum += grow[j];
      double* garow = &ga.v[static_cast<int64_t>(i) * n];
      for (int j = 0; j < n; ++j) garow[j] += grow[j] - std::exp(yrow[j]) * gsum;
    }
  });
}

Var Tape::masked_softmax_rows(Var a, const AttnMask& mask) {
  check2d(a, "masked_softmax_rows");
  const Array& av = node(a).val;
  int m = av.rows(), n = av.cols();
  if (mask.rows != m || mask.cols != n)
    throw ConfigError("masked_softmax_rows: mask " + std::to_string(mask.rows) + "x" +
                      std::to_string(mask.cols) + " vs input " + av.shape_str());
  Array y({m, n});
  for (int i = 0; i < m; ++i) {
    const double* row = &av.v[static_cast<int64_t>(i) * n];
    double* yrow = &y.v[static_cast<int64_t>(i) * n];
    double mx = kNegInf;
    for (int j = 0; j < n; ++j)
      if (mask.at(i, j)) mx = std::max(mx, row[j]);
    if (mx == kNegInf) throw NumericError("masked_softmax_rows: fully masked row");
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      if (mask.at(i, j)) {
        yrow[j] = std::exp(row[j] - mx);
        z += yrow[j];
      } else {
        yrow[j] = 0.0;
      }
    }
    for (int j = 0; j < n; ++j)
      if (mask.at(i, j)) yrow[j] /= z;
  }
  bool ng = node(a).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  auto mp = std::make_shared<AttnMask>(mask);
  return make(std::move(y), ng, [this, a, out, m, n, mp]() {
    const Array& g = nodes_[out.id].grad;
    const Array& yv = nodes_[out.id].val;
    Array& ga = nodes_[a.id].grad;
    for (int i = 0; i < m; ++i) {
      const double* grow = &g.v[static_cast<int64_t>(i) * n];
      const double* yrow = &yv.v[static_cast<int64_t>(i) * n];
      double dotv = 0.0;
      for (int j = 0; j < n; ++j)
        if (mp->at(i, j)) dotv += grow[j] * yrow[j];
      double* garow = &ga.v[static_cast<int64_t>(i) * n];
      for (int j = 0; j < n; ++j)
        if (mp->at(i, j)) garow[j] += yrow[j] * (grow[j] - dotv);
    }
  });
}

Var Tape::embedding_rows(Var table, const std::vector<int>& ids) {
  check2d(table, "embedding_rows");
  const Array& tv = node(table).val;
  int v = tv.rows(), h = tv.cols();
  for (int id : ids)
    if (id < 0 || id >= v) throw ConfigError("embedding_rows: id out of range");
  Array y({static_cast<int>(ids.size()), h});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(&tv.v[static_cast<int64_t>(ids[i]) * h], &tv.v[static_cast<int64_t>(ids[i]) * h] + h,
              &y.v[static_cast<int64_t>(i) * h]);
  bool ng = node(table).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  std::vector<int> idc = ids;
  return make(std::move(y), ng, [this, table, out, idc, h]() {
    const Array& g = nodes_[out.id].grad;
    Array& gt = nodes_[table.id].grad;
    for (size_t i = 0; i < idc.size(); ++i)
      for (int j = 0; j < h; ++j)
        gt.v[static_cast<int64_t>(idc[i]) * h + j] += g.v[static_cast<int64_t>(i) * h + j];
  });
}

Var Tape::rnnt_nll(Var logprobs, int T, int U, const std::vector<int>& labels) {
  check2d(logprobs, "rnnt_nll");
  const Array& lp = node(logprobs).val;
  int K = lp.cols();
  if (T < 1 || U < 0) throw ConfigError("rnnt_nll: need T >= 1, U >= 0");
  if (lp.rows() != T * (U + 1))
    throw ConfigError("rnnt_nll: lattice rows " + std::to_string(lp.rows()) + " != T*(U+1)");
  if (static_cast<int>(labels.size()) != U) throw ConfigError("rnnt_nll: labels size != U");
  for (int y : labels)
    if (y < 1 || y >= K) throw ConfigError("rnnt_nll: label out of range (blank is 0)");

  auto lpat = [&](int t, int u, int k) -> double {
    return lp.v[(static_cast<int64_t>(t) * (U + 1) + u) * K + k];
  };

  // Forward variable: alpha(t, u) = log-prob of consuming t frames and
  // emitting the first u labels. Blank advances t, a label advances u.
  std::vector<double> alpha(static_cast<size_t>(T) * (U + 1), kNegInf);
  auto A = [&](int t, int u) -> double& { return alpha[static_cast<size_t>(t) * (U + 1) + u]; };
  A(0, 0) = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double via_blank = t > 0 ? A(t - 1, u) + lpat(t - 1, u, 0) : kNegInf;
      double via_label = u > 0 ? A(t, u - 1) + lpat(t, u - 1, labels[u - 1]) : kNegInf;
      A(t, u) = lse2(via_blank, via_label);
    }
  }
  double log_z = A(T - 1, U) + lpat(T - 1, U, 0);
  if (!std::isfinite(log_z)) throw NumericError("rnnt_nll: non-finite log-likelihood");

  bool ng = node(logprobs).needs_grad;
  Var out{static_cast<int>(nodes_.size())};
  std::vector<int> labs = labels;
  auto alpha_p = std::make_shared<std::vector<double>>(std::move(alpha));
  return make(Array::scalar(-log_z), ng, [this, logprobs, out, T, U, K, labs, alpha_p, log_z]() {
    double gout = nodes_[out.id].grad.v[0];
    const Array& lp2 = nodes_[logprobs.id].val;
    Array& glp = nodes_[logprobs.id].grad;
    auto lpat2 = [&](int t, int u, int k) -> double {
      return lp2.v[(static_cast<int64_t>(t) * (U + 1) + u) * K + k];
    };
    auto A2 = [&](int t, int u) -> double {
      return (*alpha_p)[static_cast<size_t>(t) * (U + 1) + u];
    };
    // Backward variable: beta(t, u) = log-prob of emitting the remaining
    // labels and blanks from (t, u), ending with the final blank at (T-1, U).
    std::vector<double> beta(static_cast<size_t>(T) * (U + 1), kNegInf);
    auto B = [&](int t, int u) -> double& { return beta[static_cast<size_t>(t) * (U + 1) + u]; };
    B(T - 1, U) = lpat2(T - 1, U, 0);
    for (int t = T - 1; t >= 0; --t) {
      for (int u = U; u >= 0; --u) {
        if (t == T - 1 && u == U) continue;
        double via_blank = t + 1 < T ? lpat2(t, u, 0) + B(t + 1, u) : kNegInf;
        double via_label = u < U ? lpat2(t, u, labs[u]) + B(t, u + 1) : kNegInf;
        B(t, u) = lse2(via_blank, via_label);
      }
    }
    // d(-logZ)/d lp(t,u,k) = -(posterior occupancy of that transition).
    for (int t = 0; t < T; ++t) {
      for (int u = 0; u <= U; ++u) {
        int64_t base = (static_cast<int64_t>(t) * (U + 1) + u) * K;
        double a = A2(t, u);
        if (a == kNegInf) continue;
        double occ_blank;
        if (t == T - 1 && u == U) {
          occ_blank = a + lpat2(t, u, 0) - log_z;
        } else if (t + 1 < T) {
          occ_blank = a + lpat2(t, u, 0) + B(t + 1, u) - log_z;
        } else {
          occ_blank = kNegInf;  // blank at (T-1, u<U) falls off the lattice
        }
        if (occ_blank != kNegInf) glp.v[base + 0] -= gout * std::exp(occ_blank);
        if (u < U) {
          double occ = a + lpat2(t, u, labs[u]) + B(t, u + 1) - log_z;
          glp.v[base + labs[u]] -= gout * std::exp(occ);
        }
      }
    }
  });
}

void Tape::backward(Var root) {
  if (used_) throw ConfigError("tape already backpropagated");
  used_ = true;
  Node& r = node(root);
  if (r.val.numel() != 1) throw ConfigError("backward: root must be scalar");
  if (!r.needs_grad) return;  // nothing reachable requires gradients
  r.grad.v[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    if (nodes_[i].needs_grad && nodes_[i].back) nodes_[i].back();
  }
}

}  // namespace xd::diff
