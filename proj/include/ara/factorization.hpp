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
#include <vector>

#include "ara/matrix.hpp"

namespace ara {

// Activation-whitened SVD of a linear layer W (m×n, output × input):
// W·S = U·diag(sigma)·Vᵀ where S is the Cholesky factor of the damped input
// Gram matrix. With k = min(m, n), U is m×k and V is n×k.
struct WhitenedFactorization {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
  Matrix s;
  Matrix s_inv;
  std::size_t m = 0;
  std::size_t n = 0;

  // Number of singular values, min(m, n). This is the mask length.
  std::size_t capacity() const { return sigma.size(); }
  // ‖W·S‖_F = sqrt(Σ sigma²).
  double total_norm() const;
};

// W ≈ left·right with left = U_r·sqrt(Σ_r) (m×r) and
// right = sqrt(Σ_r)·V_rᵀ·S⁻¹ (r×n).
struct FactorPair {
  Matrix left;
  Matrix right;
  std::size_t rank = 0;

  std::size_t parameter_count() const { return left.size() + right.size(); }
  Matrix product() const { return matmul(left, right); }
};

inline constexpr double kDefaultDamping = 1e-6;

// H = X·Xᵀ for activations X laid out n×d (features × tokens).
Matrix gram(const Matrix& x);
// Same Gram matrix from activations laid out d×n (one token per row).
Matrix gram_from_token_rows(const Matrix& rows);

// Lower-triangular S with S·Sᵀ = H + ε·I, ε = damping_scale · mean(diag H).
// Throws InputError for an asymmetric H and NumericalError when the
// factorization fails even after damping.
Matrix cholesky_damped(const Matrix& h, double damping_scale = kDefaultDamping);

WhitenedFactorization whiten_and_decompose(const Matrix& w, const Matrix& x,
                                           double damping_scale = kDefaultDamping);
// Variant taking the Gram matrix directly (calibration accumulates H
// without keeping every activation).
WhitenedFactorization whiten_and_decompose_gram(const Matrix& w, const Matrix& h,
                                                double damping_scale = kDefaultDamping);

// Requires 1 <= r <= capacity().
FactorPair truncate(const WhitenedFactorization& f, std::size_t r);

// sqrt(Σ_{i>r} sigma_i²). Requires 0 <= r <= capacity().
double truncation_loss(const WhitenedFactorization& f, std::size_t r);

}  // namespace ara
