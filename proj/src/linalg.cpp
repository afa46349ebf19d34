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

#include "ara/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ara/error.hpp"

namespace ara::linalg {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void rotate(std::span<double> p, std::span<double> q, double c, double s) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p[i], y = q[i];
    p[i] = c * x - s * y;
    q[i] = s * x + c * y;
  }
}

// SVD of a matrix with rows >= cols. Rows of `work` are the columns of A.
Svd tall_svd(const Matrix& a, int max_sweeps) {
  const std::size_t m = a.rows(), n = a.cols();
  Matrix work = a.transpose();   // n×m
  Matrix vt = Matrix::identity(n);  // rows are columns of V
  constexpr double kTol = 1e-15;

  bool converged = n < 2;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(work.row(p), work.row(p));
        const double beta = dot(work.row(q), work.row(q));
        const double gamma = dot(work.row(p), work.row(q));
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        rotate(work.row(p), work.row(q), c, s);
        rotate(vt.row(p), vt.row(q), c, s);
      }
    }
  }
  if (!converged) throw NumericalError("jacobi_svd: no convergence");

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(dot(work.row(j), work.row(j)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  const double largest = n > 0 ? norms[order[0]] : 0.0;
  const double negligible = largest * 1e-300 + 1e-300;
  std::vector<bool> filled(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = vt(j, i);
    if (norms[j] > negligible) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = work(j, i) / norms[j];
      filled[k] = true;
    }
  }
  // Zero singular values leave U columns undetermined; complete them to an
  // orthonormal set from the standard basis.
  for (std::size_t k = 0; k < n; ++k) {
    if (filled[k]) continue;
    std::vector<double> best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < m; ++e) {
      std::vector<double> cand(m, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < n; ++j) {
          if (!filled[j]) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += out.u(i, j) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * out.u(i, j);
        }
      }
      const double nrm = std::sqrt(dot(cand, cand));
      if (nrm > best_norm) {
        best_norm = nrm;
        best = std::move(cand);
      }
    }
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = best[i] / best_norm;
    filled[k] = true;
  }

  return out;
}

// First non-negligible entry of each V column made non-negative.
void apply_sign_rule(Svd& svd) {
  for (std::size_t j = 0; j < svd.sigma.size(); ++j) {
    double scale = 0.0;
    for (std::size_t i = 0; i < svd.v.rows(); ++i) scale = std::max(scale, std::abs(svd.v(i, j)));
    for (std::size_t i = 0; i < svd.v.rows(); ++i) {
      const double x = svd.v(i, j);
      if (std::abs(x) <= 1e-12 * scale) continue;
      if (x < 0.0) {
        for (std::size_t r = 0; r < svd.v.rows(); ++r) svd.v(r, j) = -svd.v(r, j);
        for (std::size_t r = 0; r < svd.u.rows(); ++r) svd.u(r, j) = -svd.u(r, j);
      }
      break;
    }
  }
}

}  // namespace

Svd jacobi_svd(const Matrix& a, int max_sweeps) {
  if (!a.all_finite()) throw NumericalError("jacobi_svd: non-finite input");
  Svd out;
  if (a.rows() >= a.cols()) {
    out = tall_svd(a, max_sweeps);
  } else {
    // Aᵀ = U'ΣV'ᵀ  =>  A = V'ΣU'ᵀ.
    Svd t = tall_svd(a.transpose(), max_sweeps);
    out = Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  }
  apply_sign_rule(out);
  return out;
}

Matrix cholesky(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix is " + a.shape_string());
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw NumericalError("cholesky: non-positive pivot at column " + std::to_string(j));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Matrix lower_triangular_inverse(const Matrix& l) {
  if (l.rows() != l.cols()) throw DimensionError("triangular inverse: " + l.shape_string());
  const std::size_t n = l.rows();
  Matrix inv(n, n);
  for (std::size_t col = 0; col < n; ++col) {
    // Solve L x = e_col; x is zero above `col`.
    for (std::size_t i = col; i < n; ++i) {
      double s = i == col ? 1.0 : 0.0;
      for (std::size_t k = col; k < i; ++k) s -= l(i, k) * inv(k, col);
      if (l(i, i) == 0.0) throw NumericalError("triangular inverse: zero diagonal");
      inv(i, col) = s / l(i, i);
    }
  }
  return inv;
}

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

}  // namespace ara::linalg
