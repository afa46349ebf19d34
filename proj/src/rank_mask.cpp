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

#include "ara/rank_mask.hpp"

#include <algorithm>
#include <cmath>

#include "ara/error.hpp"

namespace ara {

Matrix StaircaseMap::as_matrix() const {
  Matrix m(steps, length);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = steps - counts[i]; j < steps; ++j) m(j, i) = 1.0;
  return m;
}

StaircaseMap build_staircase(std::size_t steps, std::size_t length) {
  if (steps < 1 || steps > length) {
    throw InputError("build_staircase: need 1 <= D <= r, got D=" + std::to_string(steps) +
                     ", r=" + std::to_string(length));
  }
  StaircaseMap map{steps, length, std::vector<std::size_t>(length)};
  for (std::size_t i = 0; i < length; ++i) map.counts[i] = steps - (i * steps) / length;
  return map;
}

std::vector<double> probability_mask(std::span<const double> alpha, const StaircaseMap& map) {
  if (alpha.size() != map.steps) {
    throw DimensionError("probability_mask: alpha has " + std::to_string(alpha.size()) +
                         " entries, staircase has " + std::to_string(map.steps) + " steps");
  }
  // Suffix sums: tail[c] = Σ of the last c weights.
  std::vector<double> tail(map.steps + 1, 0.0);
  for (std::size_t c = 1; c <= map.steps; ++c) tail[c] = tail[c - 1] + alpha[map.steps - c];
  std::vector<double> p(map.length);
  for (std::size_t i = 0; i < map.length; ++i) p[i] = tail[map.counts[i]];
  return p;
}

double module_ratio(std::span<const double> p, std::size_t m, std::size_t n) {
  double s = 0.0;
  for (double x : p) s += x;
  return s * ratio_per_retained(m, n);
}

std::size_t kept_rank(double ratio, std::size_t length) {
  if (!(ratio > 0.0)) return 0;
  const double k = std::floor(ratio * static_cast<double>(length));
  return k >= static_cast<double>(length) ? length : static_cast<std::size_t>(k);
}

std::vector<double> binarize(double ratio, std::size_t length) {
  std::vector<double> m(length, 0.0);
  std::fill_n(m.begin(), kept_rank(ratio, length), 1.0);
  return m;
}

std::size_t layer_rank(double ratio, std::size_t m, std::size_t n) {
  const std::size_t cap = std::min(m, n);
  if (!(ratio > 0.0)) return 0;
  const double exact = ratio * static_cast<double>(m * n) / static_cast<double>(m + n);
  // Absorb rounding so that an integral Σ p maps back onto itself.
  const double k = std::floor(exact + 1e-9 * std::max(1.0, exact));
  return k >= static_cast<double>(cap) ? cap : static_cast<std::size_t>(k);
}

std::vector<double> layer_binary_mask(double ratio, std::size_t m, std::size_t n) {
  std::vector<double> mask(std::min(m, n), 0.0);
  std::fill_n(mask.begin(), layer_rank(ratio, m, n), 1.0);
  return mask;
}

RankMask::RankMask(std::string name, std::size_t requested_steps, std::size_t m, std::size_t n)
    : m_(m), n_(n) {
  const std::size_t length = std::min(m, n);
  if (length == 0) throw InputError("RankMask: empty layer");
  std::size_t steps = std::max<std::size_t>(1, requested_steps);
  if (steps > length) {
    steps = length;
    steps_clamped_ = true;
  }
  map_ = build_staircase(steps, length);
  staircase_ = map_.as_matrix();
  theta_ = ad::Parameter(std::move(name), Matrix(1, steps, 0.0));
}

RankMask::Forward RankMask::evaluate(ad::Graph& g) {
  Forward f;
  f.alpha = ad::softmax_rows(g.param(theta_));
  f.p = ad::matmul(f.alpha, g.constant(staircase_));
  f.retained = ad::sum(f.p);
  f.ratio = ad::scale(f.retained, ratio_per_retained(m_, n_));
  f.ratio_value = f.ratio.value().item();
  f.binary = layer_binary_mask(f.ratio_value, m_, n_);
  f.mask = ste_apply(f.p, f.binary);
  return f;
}

RankMask::Snapshot RankMask::snapshot() const {
  Snapshot s;
  const Matrix& t = theta_.value;
  const double mx = *std::max_element(t.data().begin(), t.data().end());
  double z = 0.0;
  s.alpha.resize(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) z += (s.alpha[j] = std::exp(t[j] - mx));
  for (double& a : s.alpha) a /= z;
  s.p = probability_mask(s.alpha, map_);
  s.ratio = module_ratio(s.p, m_, n_);
  return s;
}

ad::Var ste_apply(ad::Var p, std::span<const double> binary) {
  if (p.rows() != 1 || p.cols() != binary.size()) {
    throw DimensionError("ste_apply: p is " + p.value().shape_string() + ", binary mask has " +
                         std::to_string(binary.size()) + " entries");
  }
  return ad::straight_through(p, Matrix::row_vector(binary));
}

}  // namespace ara
