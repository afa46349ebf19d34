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
#include <span>
#include <string>
#include <vector>

#include "ara/autodiff.hpp"
#include "ara/matrix.hpp"

namespace ara {

// Staircase map from D simplex weights onto a mask of length r. counts[i] is
// the number of ones in column i of the D×r binary matrix; the ones occupy
// the bottom counts[i] rows, so mask entry i sums the last counts[i] weights.
struct StaircaseMap {
  std::size_t steps = 0;
  std::size_t length = 0;
  std::vector<std::size_t> counts;

  // Materialized D×r 0/1 matrix.
  Matrix as_matrix() const;
};

// Canonical staircase: counts[i] = D − floor(i·D / r) for 0-based i, which
// gives every step the same number of columns when D divides r. Requires
// 1 <= D <= r (InputError otherwise).
StaircaseMap build_staircase(std::size_t steps, std::size_t length);

// p_i = Σ_{j >= D − counts[i]} alpha_j (0-based j).
std::vector<double> probability_mask(std::span<const double> alpha, const StaircaseMap& map);

// R = (Σ p_i)(m + n) / (m·n) for an m×n layer.
double module_ratio(std::span<const double> p, std::size_t m, std::size_t n);
inline double ratio_per_retained(std::size_t m, std::size_t n) {
  return static_cast<double>(m + n) / static_cast<double>(m * n);
}

// min(floor(R·r), r); R < 0 keeps nothing.
std::size_t kept_rank(double ratio, std::size_t length);
// Prefix mask with kept_rank(R, r) ones.
std::vector<double> binarize(double ratio, std::size_t length);

// Number of leading singular values an m×n layer keeps at ratio R: the
// rank whose factored cost k(m+n) matches R·m·n, i.e. floor(R·mn/(m+n)),
// capped at min(m, n). This equals floor(Σ p) for the mask that produced R.
std::size_t layer_rank(double ratio, std::size_t m, std::size_t n);
// Length-min(m, n) prefix mask with layer_rank(R, m, n) ones.
std::vector<double> layer_binary_mask(double ratio, std::size_t m, std::size_t n);

// Differentiable per-layer mask: theta (1×D, unconstrained) → alpha =
// softmax(theta) on the simplex → p = alpha·M → R.
class RankMask {
 public:
  // `requested_steps` is clamped to the mask length.
  RankMask(std::string name, std::size_t requested_steps, std::size_t m, std::size_t n);

  struct Forward {
    ad::Var alpha;     // 1×D
    ad::Var p;         // 1×r
    ad::Var retained;  // 1×1, Σ p
    ad::Var ratio;     // 1×1, R
    double ratio_value = 0.0;
    std::vector<double> binary;  // layer_binary_mask for the current R
    ad::Var mask;      // 1×r, binary forward value with straight-through gradient into p
  };

  Forward evaluate(ad::Graph& g);

  struct Snapshot {
    std::vector<double> alpha;
    std::vector<double> p;
    double ratio = 0.0;
  };
  Snapshot snapshot() const;

  ad::Parameter& theta() { return theta_; }
  const ad::Parameter& theta() const { return theta_; }
  const StaircaseMap& map() const { return map_; }
  std::size_t length() const { return map_.length; }
  std::size_t steps() const { return map_.steps; }
  bool steps_clamped() const { return steps_clamped_; }
  std::size_t m() const { return m_; }
  std::size_t n() const { return n_; }

 private:
  ad::Parameter theta_;
  StaircaseMap map_;
  Matrix staircase_;
  std::size_t m_;
  std::size_t n_;
  bool steps_clamped_ = false;
};

// mask = p + stop_gradient(binary − p): forward uses the binary mask, the
// backward pass hands ∂L/∂mask to p unchanged.
ad::Var ste_apply(ad::Var p, std::span<const double> binary);

}  // namespace ara
