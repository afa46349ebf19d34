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

#include <cstdint>
#include <vector>

#include "ara/autodiff.hpp"

namespace ara::ad {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

// Adam with decoupled weight decay. The parameter set is fixed at
// construction; moment buffers are allocated to match each parameter.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWOptions options);

  // Applies one update and zeroes the gradients. Throws UsageError if a
  // parameter did not receive a gradient since the last step.
  void step();
  void zero_grad();

  std::int64_t steps() const { return step_; }
  const AdamWOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  AdamWOptions options_;
  std::int64_t step_ = 0;
};

}  // namespace ara::ad
