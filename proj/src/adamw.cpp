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

#include "ara/adamw.hpp"

#include <cmath>

#include "ara/error.hpp"

namespace ara::ad {

AdamW::AdamW(std::vector<Parameter*> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (Parameter* p : params_) {
    first_moment_.emplace_back(p->value.rows(), p->value.cols());
    second_moment_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void AdamW::step() {
  for (Parameter* p : params_) {
    if (!p->has_grad) throw UsageError("AdamW: parameter '" + p->name() + "' has no gradient");
  }
  double clip = 1.0;
  if (options_.clip_norm > 0.0) {
    double sq = 0.0;
    for (Parameter* p : params_)
      for (double g : p->grad.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > options_.clip_norm) clip = options_.clip_norm / norm;
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Matrix& m = first_moment_[k];
    Matrix& v = second_moment_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] * clip;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p.value[i] -= options_.lr * options_.weight_decay * p.value[i];
      p.value[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
  zero_grad();
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace ara::ad
