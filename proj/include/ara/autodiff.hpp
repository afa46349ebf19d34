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

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ara/matrix.hpp"

// Tape-based reverse-mode differentiation over Matrix values.
//
// A Graph records every operation in creation order; backward() walks the
// tape in reverse, so creation order is a valid topological order. Vars are
// lightweight handles into their Graph and must not outlive it.
namespace ara::ad {

// Persistent trainable tensor. Graph::param() binds one to a leaf node;
// backward() adds the leaf's gradient into `grad`.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  const std::string& name() const { return name_; }
  void zero_grad();

  Matrix value;
  Matrix grad;
  // Set once a backward pass has reached this parameter since the last
  // zero_grad().
  bool has_grad = false;

 private:
  std::string name_;
};

class Graph;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Gradient of the last backward() loss w.r.t. this node. Empty for nodes
  // that do not require gradients.
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  struct Options {
    // When false a second backward() on the same graph throws UsageError.
    // When true leaf gradients accumulate across calls.
    bool accumulate_on_repeat = false;
  };

  // Propagates the node's own gradient into its parents' gradients.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  explicit Graph(Options options) : options_(options) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  // Leaf bound to a persistent parameter. With trainable == false the value
  // is used as a constant and no gradient is routed back.
  Var param(Parameter& p, bool trainable = true);

  void backward(Var loss);

  // Records an op result. The node requires a gradient iff any parent does;
  // `fn` is dropped otherwise.
  Var record(Matrix value, std::vector<std::size_t> parents, BackwardFn fn);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Adds `delta` into the gradient of node `id` if it requires one.
  void accumulate(std::size_t id, const Matrix& delta);
  // Mutable gradient buffer; only valid during backward for nodes that
  // require a gradient.
  Matrix& grad_buffer(std::size_t id) { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }
  Var handle(std::size_t id) { return Var(this, id); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
    Parameter* param = nullptr;
  };

  Options options_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Shape rules: binary elementwise ops need equal shapes, or one side 1×1
// (scalar broadcast). Everything else throws DimensionError.

Var matmul(Var a, Var b);
// a·bᵀ
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
// factor·a + shift
Var affine(Var a, double factor, double shift);

Var silu(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var tanh(Var a);
Var sigmoid(Var a);

// 1×1 sum / mean of all entries.
Var sum(Var a);
Var mean(Var a);

// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
// Mean over rows of −log softmax(logits)[row, target]. Throws InputError when
// a target is out of range or the count does not match the row count.
Var cross_entropy(Var logits, std::span<const int> targets);
// y = x / sqrt(mean(x²) + eps), row by row.
Var rms_norm_rows(Var a, double eps = 1e-6);
// Gathers rows of `table`; negative ids produce zero rows.
Var embedding(Var table, std::span<const int> ids);
// a · diag(v) for a row vector v with a.cols() entries.
Var scale_cols(Var a, Var v);
// Forward value is `hard`, backward passes the gradient to `soft` unchanged:
// soft + stop_gradient(hard − soft).
Var straight_through(Var soft, const Matrix& hard);
Var stop_gradient(Var a);

}  // namespace ara::ad
