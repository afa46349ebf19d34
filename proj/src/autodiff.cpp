// Copyright 2026 The ARA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ara/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ara/error.hpp"

namespace ara::ad {

Parameter::Parameter(std::string name, Matrix value)
    : value(std::move(value)), name_(std::move(name)) {
  grad = Matrix(this->value.rows(), this->value.cols());
}

void Parameter::zero_grad() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix(value.rows(), value.cols());
  } else {
    grad.fill(0.0);
  }
  has_grad = false;
}

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.leaf = true;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p, bool trainable) {
  if (!trainable) return constant(p.value);
  Var v = variable(p.value);
  nodes_[v.id()].param = &p;
  return v;
}

Var Graph::record(Matrix value, std::vector<std::size_t> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::accumulate(std::size_t id, const Matrix& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  n.grad += delta;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw UsageError("backward: loss belongs to another graph");
  if (!value(loss.id()).is_scalar()) {
    throw UsageError("backward: loss must be 1x1, got " +
                     value(loss.id()).shape_string());
  }
  if (backward_done_ && !options_.accumulate_on_repeat) {
    throw UsageError("backward called twice on the same graph");
  }
  for (Node& n : nodes_) {
    if (!n.requires_grad) continue;
    const bool keep = n.leaf && n.param == nullptr && backward_done_;
    if (!keep || n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
  for (Node& n : nodes_) {
    if (n.param == nullptr) continue;
    Parameter& p = *n.param;
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.grad = Matrix(p.value.rows(), p.value.cols());
    }
    p.grad += n.grad;
    p.has_grad = true;
  }
}

namespace {

void require_same_graph(Var a, Var b) {
  if (a.graph() != b.graph()) throw UsageError("operands belong to different graphs");
}

enum class Broadcast { kNone, kLeftScalar, kRightScalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
  if (b.is_scalar()) return Broadcast::kRightScalar;
  if (a.is_scalar()) return Broadcast::kLeftScalar;
  throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() +
                       " vs " + b.shape_string());
}

template <typename F>
Matrix broadcast_apply(const Matrix& a, const Matrix& b, Broadcast kind, F f) {
  switch (kind) {
    case Broadcast::kNone: {
      Matrix out = a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
      return out;
    }
    case Broadcast::kRightScalar: {
      Matrix out = a;
      const double s = b[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], s);
      return out;
    }
    case Broadcast::kLeftScalar: {
      Matrix out = b;
      const double s = a[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(s, b[i]);
      return out;
    }
  }
  return {};
}

// Reduces a full-shape gradient onto an operand that may have been broadcast.
Matrix reduce_to(const Matrix& g, const Matrix& like) {
  if (like.is_scalar() && !g.is_scalar()) return Matrix::scalar(g.sum());
  return g;
}

// Elementwise unary op whose derivative is expressed through (x, y).
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Graph& g = *a.graph();
  Matrix out = a.value();
  for (auto& x : out.data()) x = fwd(x);
  const std::size_t ai = a.id();
  return g.record(std::move(out), {ai}, [ai, deriv](Graph& g, std::size_t self) {
    const Matrix& x = g.value(ai);
    const Matrix& y = g.value(self);
    const Matrix& gy = g.grad(self);
    Matrix gx(x.rows(), x.cols());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gy[i] * deriv(x[i], y[i]);
    g.accumulate(ai, gx);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph();
  const std::size_t ai = a.id(), bi = b.id();
  return g.record(ara::matmul(a.value(), b.value()), {ai, bi},
                  [ai, bi](Graph& g, std::size_t self) {
                    const Matrix& gy = g.grad(self);
                    if (g.requires_grad(ai)) g.accumulate(ai, ara::matmul_nt(gy, g.value(bi)));
                    if (g.requires_grad(bi)) g.accumulate(bi, ara::matmul_tn(g.value(ai), gy));
                  });
}

Var matmul_nt(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph();
  const std::size_t ai = a.id(), bi = b.id();
  return g.record(ara::matmul_nt(a.value(), b.value()), {ai, bi},
                  [ai, bi](Graph& g, std::size_t self) {
                    const Matrix& gy = g.grad(self);
                    if (g.requires_grad(ai)) g.accumulate(ai, ara::matmul(gy, g.value(bi)));
                    if (g.requires_grad(bi)) g.accumulate(bi, ara::matmul_tn(gy, g.value(ai)));
                  });
}

Var transpose(Var a) {
  Graph& g = *a.graph();
  const std::size_t ai = a.id();
  return g.record(a.value().transpose(), {ai}, [ai](Graph& g, std::size_t self) {
    g.accumulate(ai, g.grad(self).transpose());
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph();
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "add");
  const std::size_t ai = a.id(), bi = b.id();
  Matrix out = broadcast_apply(a.value(), b.value(), kind,
                               [](double x, double y) { return x + y; });
  return g.record(std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    if (g.requires_grad(ai)) g.accumulate(ai, reduce_to(gy, g.value(ai)));
    if (g.requires_grad(bi)) g.accumulate(bi, reduce_to(gy, g.value(bi)));
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph();
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "sub");
  const std::size_t ai = a.id(), bi = b.id();
  Matrix out = broadcast_apply(a.value(), b.value(), kind,
                               [](double x, double y) { return x - y; });
  return g.record(std::move(out), {ai, bi}, [ai, bi](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    if (g.requires_grad(ai)) g.accumulate(ai, reduce_to(gy, g.value(ai)));
    if (g.requires_grad(bi)) g.accumulate(bi, reduce_to(gy * -1.0, g.value(bi)));
  });
}

Var hadamard(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph();
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "hadamard");
  const std::size_t ai = a.id(), bi = b.id();
  Matrix out = broadcast_apply(a.value(), b.value(), kind,
                               [](double x, double y) { return x * y; });
  return g.record(std::move(out), {ai, bi}, [ai, bi, kind](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    const Matrix& av = g.value(ai);
    const Matrix& bv = g.value(bi);
    // gy has the broadcast shape; a scalar operand is expanded on the fly.
    const auto mul = [](double x, double y) { return x * y; };
    if (g.requires_grad(ai)) {
      Matrix ga = broadcast_apply(
          gy, bv, kind == Broadcast::kRightScalar ? Broadcast::kRightScalar : Broadcast::kNone,
          mul);
      g.accumulate(ai, reduce_to(ga, av));
    }
    if (g.requires_grad(bi)) {
      Matrix gb = broadcast_apply(
          gy, av, kind == Broadcast::kLeftScalar ? Broadcast::kRightScalar : Broadcast::kNone,
          mul);
      g.accumulate(bi, reduce_to(gb, bv));
    }
  });
}

Var scale(Var a, double factor) { return affine(a, factor, 0.0); }

Var affine(Var a, double factor, double shift) {
  Graph& g = *a.graph();
  Matrix out = a.value();
  for (auto& x : out.data()) x = factor * x + shift;
  const std::size_t ai = a.id();
  return g.record(std::move(out), {ai}, [ai, factor](Graph& g, std::size_t self) {
    g.accumulate(ai, g.grad(self) * factor);
  });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var sum(Var a) {
  Graph& g = *a.graph();
  const std::size_t ai = a.id();
  return g.record(Matrix::scalar(a.value().sum()), {ai}, [ai](Graph& g, std::size_t self) {
    const Matrix& x = g.value(ai);
    g.accumulate(ai, Matrix(x.rows(), x.cols(), g.grad(self)[0]));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw InputError("mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var softmax_rows(Var a) {
  Graph& g = *a.graph();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (out[c] = std::exp(in[c] - mx));
    for (double& v : out) v /= z;
  }
  const std::size_t ai = a.id();
  return g.record(std::move(y), {ai}, [ai](Graph& g, std::size_t self) {
    const Matrix& y = g.value(self);
    const Matrix& gy = g.grad(self);
    Matrix gx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = gy.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      auto out = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out[c] = yr[c] * (gr[c] - dot);
    }
    g.accumulate(ai, gx);
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  Graph& g = *logits.graph();
  const Matrix& x = logits.value();
  if (targets.size() != x.rows()) {
    throw InputError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(x.rows()) + " rows");
  }
  if (x.rows() == 0) throw InputError("cross_entropy: no rows");
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= x.cols()) {
      throw InputError("cross_entropy: target " + std::to_string(t) +
                       " out of range for vocab " + std::to_string(x.cols()));
    }
    auto in = x.row(r);
    auto p = probs.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (p[c] = std::exp(in[c] - mx));
    for (double& v : p) v /= z;
    total -= in[t] - mx - std::log(z);
  }
  const double n = static_cast<double>(x.rows());
  std::vector<int> tgt(targets.begin(), targets.end());
  const std::size_t li = logits.id();
  return g.record(Matrix::scalar(total / n), {li},
                  [li, probs = std::move(probs), tgt = std::move(tgt), n](Graph& g,
                                                                          std::size_t self) {
                    const double scale = g.grad(self)[0] / n;
                    Matrix gx = probs;
                    for (std::size_t r = 0; r < gx.rows(); ++r) gx(r, tgt[r]) -= 1.0;
                    gx *= scale;
                    g.accumulate(li, gx);
                  });
}

Var rms_norm_rows(Var a, double eps) {
  Graph& g = *a.graph();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  Matrix inv_rms(x.rows(), 1);
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double ms = 0.0;
    for (double v : in) ms += v * v;
    const double inv = 1.0 / std::sqrt(ms / n + eps);
    inv_rms[r] = inv;
    auto out = y.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = in[c] * inv;
  }
  const std::size_t ai = a.id();
  return g.record(std::move(y), {ai},
                  [ai, inv_rms = std::move(inv_rms), n](Graph& g, std::size_t self) {
                    const Matrix& y = g.value(self);
                    const Matrix& gy = g.grad(self);
                    Matrix gx(y.rows(), y.cols());
                    for (std::size_t r = 0; r < y.rows(); ++r) {
                      auto yr = y.row(r);
                      auto gr = gy.row(r);
                      double dot = 0.0;
                      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
                      dot /= n;
                      auto out = gx.row(r);
                      for (std::size_t c = 0; c < yr.size(); ++c)
                        out[c] = inv_rms[r] * (gr[c] - yr[c] * dot);
                    }
                    g.accumulate(ai, gx);
                  });
}

Var embedding(Var table, std::span<const int> ids) {
  Graph& g = *table.graph();
  const Matrix& t = table.value();
  Matrix out(ids.size(), t.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0) continue;
    if (static_cast<std::size_t>(id) >= t.rows()) {
      throw InputError("embedding: id " + std::to_string(id) + " out of range for " +
                       std::to_string(t.rows()) + " rows");
    }
    std::copy(t.row(id).begin(), t.row(id).end(), out.row(r).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const std::size_t ti = table.id();
  return g.record(std::move(out), {ti}, [ti, idv = std::move(idv)](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    Matrix& gt = g.grad_buffer(ti);
    for (std::size_t r = 0; r < idv.size(); ++r) {
      if (idv[r] < 0) continue;
      auto dst = gt.row(idv[r]);
      auto src = gy.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var scale_cols(Var a, Var v) {
  require_same_graph(a, v);
  Graph& g = *a.graph();
  const Matrix& x = a.value();
  const Matrix& s = v.value();
  if (s.rows() != 1 || s.cols() != x.cols()) {
    throw DimensionError("scale_cols: " + x.shape_string() + " with scale " +
                         s.shape_string());
  }
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] *= s[c];
  }
  const std::size_t ai = a.id(), vi = v.id();
  return g.record(std::move(out), {ai, vi}, [ai, vi](Graph& g, std::size_t self) {
    const Matrix& gy = g.grad(self);
    const Matrix& x = g.value(ai);
    const Matrix& s = g.value(vi);
    if (g.requires_grad(ai)) {
      Matrix gx = gy;
      for (std::size_t r = 0; r < gx.rows(); ++r) {
        auto row = gx.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] *= s[c];
      }
      g.accumulate(ai, gx);
    }
    if (g.requires_grad(vi)) {
      Matrix gs(1, s.cols());
      for (std::size_t r = 0; r < x.rows(); ++r) {
        auto xr = x.row(r);
        auto gr = gy.row(r);
        for (std::size_t c = 0; c < xr.size(); ++c) gs[c] += xr[c] * gr[c];
      }
      g.accumulate(vi, gs);
    }
  });
}

Var straight_through(Var soft, const Matrix& hard) {
  require_same_shape(soft.value(), hard, "straight_through");
  Graph& g = *soft.graph();
  const std::size_t si = soft.id();
  return g.record(hard, {si}, [si](Graph& g, std::size_t self) {
    g.accumulate(si, g.grad(self));
  });
}

Var stop_gradient(Var a) { return a.graph()->constant(a.value()); }

}  // namespace ara::ad
