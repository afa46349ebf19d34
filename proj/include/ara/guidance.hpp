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

#include <string>

#include "ara/autodiff.hpp"
#include "ara/factorization.hpp"
#include "ara/layer_mode.hpp"
#include "ara/rank_mask.hpp"

namespace ara {

// A compressible linear layer during allocation: frozen dense weight, its
// cached whitened factorization (full-capacity factor pair), and its mask.
struct CompressibleLayer {
  CompressibleLayer(std::string name, const Matrix& weight, WhitenedFactorization f,
                    std::size_t mask_steps);

  std::string name;
  const Matrix* weight;  // owned by the model, m×n
  WhitenedFactorization factorization;
  FactorPair full_pair;  // rank = factorization.capacity()
  RankMask mask;
  LayerMode mode = LayerMode::kLowRank;
};

struct GuidanceEval {
  double capacity = 0.0;  // G_R
  double loss = 0.0;      // L_g
  LayerMode mode = LayerMode::kLowRank;
  double ratio = 0.0;
  bool degenerate = false;  // L₀ == 0
};

// G_R = (L₀ − L_R)/L₀ with L_R the truncation loss at layer_rank(R, m, n).
// A layer with L₀ == 0 reports 1 and sets *degenerate.
double capacity_preserved(const WhitenedFactorization& f, double ratio,
                          bool* degenerate = nullptr);

// 0 when G_R > R, otherwise 1 − R. With `clamp` the second branch is
// max(0, 1 − R) so a ratio above 1 is not rewarded further.
double guidance_loss(double capacity, double ratio, bool clamp = true);

// Dense when R >= 1.
inline LayerMode select_mode(double ratio) {
  return ratio >= 1.0 ? LayerMode::kDense : LayerMode::kLowRank;
}

GuidanceEval evaluate_guidance(const WhitenedFactorization& f, double ratio, bool clamp = true);

// Differentiable L_g: a constant zero on the first branch, otherwise
// 1 − R built from the ratio node so the gradient reaches the mask.
ad::Var guidance_loss_node(ad::Var ratio, double capacity, bool clamp = true);

// W' for the current step: the dense weight as a constant when R >= 1,
// otherwise W_u·diag(mask)·W_v with the straight-through mask. Updates
// layer.mode.
ad::Var effective_weight(ad::Graph& g, CompressibleLayer& layer, const RankMask::Forward& mask);

// W_u·diag(mask)·W_v for an arbitrary mask node of length r.
ad::Var masked_low_rank_weight(ad::Graph& g, const FactorPair& pair, ad::Var mask);

}  // namespace ara
