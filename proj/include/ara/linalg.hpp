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

#include <vector>

#include "ara/matrix.hpp"

namespace ara::linalg {

// Thin SVD A = U·diag(sigma)·Vᵀ with k = min(m, n): U is m×k, V is n×k,
// sigma is non-increasing. Each column of V has its first non-negligible
// entry non-negative (U flipped to match).
struct Svd {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};

// One-sided (Hestenes) Jacobi SVD. Wide inputs are handled through the
// transpose. Throws NumericalError if the sweeps fail to converge or the
// input has non-finite entries.
Svd jacobi_svd(const Matrix& a, int max_sweeps = 80);

// Lower-triangular L with L·Lᵀ = a. Reads only the lower triangle. Throws
// NumericalError on a non-positive pivot.
Matrix cholesky(const Matrix& a);

// Inverse of a lower-triangular matrix by forward substitution, one column
// of the identity at a time.
Matrix lower_triangular_inverse(const Matrix& l);

bool is_symmetric(const Matrix& a, double tol);

}  // namespace ara::linalg
