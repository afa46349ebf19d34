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
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ara {

class Rng;

// Dense row-major matrix of doubles. Vectors are 1×n or n×1 matrices and
// scalars are 1×1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix scalar(double value) { return Matrix(1, 1, value); }
  static Matrix row_vector(std::span<const double> values);
  static Matrix diagonal(std::span<const double> values);
  // Entries drawn i.i.d. from N(0, stddev²).
  static Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng,
                              double stddev = 1.0);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  // Scalar value of a 1×1 matrix.
  double item() const;

  Matrix transpose() const;
  // Columns [begin, end).
  Matrix col_range(std::size_t begin, std::size_t end) const;
  // Rows [begin, end).
  Matrix row_range(std::size_t begin, std::size_t end) const;

  void fill(double value);
  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double factor);
  // this += factor * other
  void add_scaled(const Matrix& other, double factor);

  double sum() const;
  double frobenius_norm() const;
  double max_abs() const;
  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

  std::string shape_string() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double factor);
Matrix operator*(double factor, Matrix a);

// a·b
Matrix matmul(const Matrix& a, const Matrix& b);
// aᵀ·b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a·bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix hadamard(const Matrix& a, const Matrix& b);

// Largest absolute entry of a − b.
double max_abs_diff(const Matrix& a, const Matrix& b);

// Throws DimensionError unless a and b have the same shape.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace ara
