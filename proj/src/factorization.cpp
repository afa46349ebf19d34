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

#include "ara/factorization.hpp"

#include <cmath>

#include "ara/error.hpp"
#include "ara/linalg.hpp"

namespace ara {

double WhitenedFactorization::total_norm() const { return truncation_loss(*this, 0); }

Matrix gram(const Matrix& x) {
  if (x.empty()) throw InputError("gram: empty activation matrix");
  return matmul_nt(x, x);
}

Matrix gram_from_token_rows(const Matrix& rows) {
  if (rows.empty()) throw InputError("gram: empty activation matrix");
  return matmul_tn(rows, rows);
}

Matrix cholesky_damped(const Matrix& h, double damping_scale) {
  if (h.rows() != h.cols()) throw InputError("cholesky_damped: H is " + h.shape_string());
  if (damping_scale < 0.0) throw InputError("cholesky_damped: negative damping");
  const double tol = 1e-10 * std::max(1.0, h.max_abs());
  if (!linalg::is_symmetric(h, tol)) throw InputError("cholesky_damped: H is not symmetric");
  const std::size_t n = h.rows();
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += h(i, i);
  mean_diag = n > 0 ? mean_diag / static_cast<double>(n) : 0.0;
  // An all-zero H has no scale to borrow; damp by the bare coefficient.
  const double eps = damping_scale * (mean_diag > 0.0 ? mean_diag : 1.0);
  Matrix damped = h;
  for (std::size_t i = 0; i < n; ++i) damped(i, i) += eps;
  try {
    return linalg::cholesky(damped);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("cholesky_damped: ") + e.what() +
                         " (damping " + std::to_string(eps) + ")");
  }
}

WhitenedFactorization whiten_and_decompose(const Matrix& w, const Matrix& x,
                                           double damping_scale) {
  if (x.rows() != w.cols()) {
    throw DimensionError("whiten_and_decompose: W is " + w.shape_string() + ", X is " +
                         x.shape_string());
  }
  return whiten_and_decompose_gram(w, gram(x), damping_scale);
}

WhitenedFactorization whiten_and_decompose_gram(const Matrix& w, const Matrix& h,
                                                double damping_scale) {
  if (h.rows() != w.cols()) {
    throw DimensionError("whiten_and_decompose: W is " + w.shape_string() + ", H is " +
                         h.shape_string());
  }
  WhitenedFactorization f;
  f.m = w.rows();
  f.n = w.cols();
  f.s = cholesky_damped(h, damping_scale);
  f.s_inv = linalg::lower_triangular_inverse(f.s);
  linalg::Svd svd = linalg::jacobi_svd(matmul(w, f.s));
  f.u = std::move(svd.u);
  f.sigma = std::move(svd.sigma);
  f.v = std::move(svd.v);
  return f;
}

FactorPair truncate(const WhitenedFactorization& f, std::size_t r) {
  if (r < 1 || r > f.capacity()) {
    throw InputError("truncate: rank " + std::to_string(r) + " outside [1, " +
                     std::to_string(f.capacity()) + "]");
  }
  FactorPair pair;
  pair.rank = r;
  pair.left = Matrix(f.m, r);
  Matrix scaled_vt(r, f.n);
  for (std::size_t j = 0; j < r; ++j) {
    const double root = std::sqrt(f.sigma[j]);
    for (std::size_t i = 0; i < f.m; ++i) pair.left(i, j) = f.u(i, j) * root;
    for (std::size_t i = 0; i < f.n; ++i) scaled_vt(j, i) = f.v(i, j) * root;
  }
  pair.right = matmul(scaled_vt, f.s_inv);
  return pair;
}

double truncation_loss(const WhitenedFactorization& f, std::size_t r) {
  if (r > f.capacity()) {
    throw InputError("truncation_loss: rank " + std::to_string(r) + " exceeds " +
                     std::to_string(f.capacity()));
  }
  double tail = 0.0;
  for (std::size_t i = f.capacity(); i-- > r;) tail += f.sigma[i] * f.sigma[i];
  return std::sqrt(tail);
}

}  // namespace ara
