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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>

#include "ara/autodiff.hpp"
#include "ara/matrix.hpp"
#include "ara/rng.hpp"

namespace ara::testing {

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  return e;
}

inline Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c) m(r, c) = e(r, c);
  return m;
}

using ScalarFn = std::function<ad::Var(ad::Graph&, ad::Var)>;

// Gradient of a scalar-valued graph function at x by central differences.
inline Matrix numeric_gradient(const ScalarFn& f, const Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Matrix plus = x, minus = x;
    plus[i] += h;
    minus[i] -= h;
    ad::Graph gp, gm;
    const double fp = f(gp, gp.variable(plus)).value().item();
    const double fm = f(gm, gm.variable(minus)).value().item();
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Matrix analytic_gradient(const ScalarFn& f, const Matrix& x) {
  ad::Graph g;
  ad::Var v = g.variable(x);
  g.backward(f(g, v));
  return v.grad();
}

// max |a − b| / max(1, |b|) elementwise.
inline double max_rel_err(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  return Matrix::random_normal(rows, cols, rng, scale);
}

}  // namespace ara::testing
