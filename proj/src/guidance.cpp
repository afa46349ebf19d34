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

#include "ara/guidance.hpp"

#include <algorithm>

namespace ara {

CompressibleLayer::CompressibleLayer(std::string layer_name, const Matrix& w,
                                     WhitenedFactorization f, std::size_t mask_steps)
    : name(std::move(layer_name)),
      weight(&w),
      factorization(std::move(f)),
      full_pair(truncate(factorization, factorization.capacity())),
      mask(name + ".theta", mask_steps, w.rows(), w.cols()) {}

double capacity_preserved(const WhitenedFactorization& f, double ratio, bool* degenerate) {
  const double l0 = f.total_norm();
  if (degenerate != nullptr) *degenerate = l0 == 0.0;
  if (l0 == 0.0) return 1.0;
  const double lr = truncation_loss(f, layer_rank(ratio, f.m, f.n));
  return std::clamp((l0 - lr) / l0, 0.0, 1.0);
}

double guidance_loss(double capacity, double ratio, bool clamp) {
  if (capacity > ratio) return 0.0;
  return clamp ? std::max(0.0, 1.0 - ratio) : 1.0 - ratio;
}

GuidanceEval evaluate_guidance(const WhitenedFactorization& f, double ratio, bool clamp) {
  GuidanceEval e;
  e.ratio = ratio;
  e.capacity = capacity_preserved(f, ratio, &e.degenerate);
  e.loss = guidance_loss(e.capacity, ratio, clamp);
  e.mode = select_mode(ratio);
  return e;
}

ad::Var guidance_loss_node(ad::Var ratio, double capacity, bool clamp) {
  const double r = ratio.value().item();
  if (capacity > r || (clamp && r >= 1.0)) return ratio.graph()->constant(Matrix::scalar(0.0));
  return ad::affine(ratio, -1.0, 1.0);
}

ad::Var effective_weight(ad::Graph& g, CompressibleLayer& layer, const RankMask::Forward& mask) {
  layer.mode = select_mode(mask.ratio_value);
  if (layer.mode == LayerMode::kDense) return g.constant(*layer.weight);
  return masked_low_rank_weight(g, layer.full_pair, mask.mask);
}

ad::Var masked_low_rank_weight(ad::Graph& g, const FactorPair& pair, ad::Var mask) {
  ad::Var left = ad::scale_cols(g.constant(pair.left), mask);
  return ad::matmul(left, g.constant(pair.right));
}

}  // namespace ara
