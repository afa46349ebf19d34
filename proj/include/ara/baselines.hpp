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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ara/allocator.hpp"

namespace ara {

enum class BaselineKind { kUniform, kTanhMask, kGumbelMask };

std::string to_string(BaselineKind kind);
// Accepts "uniform", "tanh"/"tanh-mask", "gumbel"/"gumbel-mask".
BaselineKind parse_baseline_kind(const std::string& tag);

struct BaselineOptions {
  // Soft transition spans about 2/beta = 10 singular-value indices.
  double tanh_beta = 0.2;
  double gumbel_temperature = 0.5;
  // Learning rate for the tanh cutoff k, which lives in index units.
  double tanh_lr = 0.05;
  // Overrides TrainConfig::lr for the Gumbel logits when set.
  std::optional<double> gumbel_lr;
};

struct UniformAllocation {
  std::vector<std::size_t> ranks;
  std::vector<std::string> notes;  // clamp/rebalance events
};

// r_i = floor(R·m_i·n_i/(m_i+n_i)) clamped to [1, min(m_i, n_i)]. Layers
// pushed up to rank 1 are paid for by decrementing the largest other ranks
// while the total exceeds the target budget.
UniformAllocation uniform_allocate(std::span<const std::pair<std::size_t, std::size_t>> shapes,
                                   double target_ratio);

// m_i = 0.5·tanh(β(k − i)) + 0.5 for i = 1..r; k is a 1×1 node.
ad::Var tanh_mask(ad::Var k, double beta, std::size_t length);
std::vector<double> tanh_mask_values(double k, double beta, std::size_t length);

// Relaxed Bernoulli sample sigmoid((l + log u − log(1 − u))/τ) with u drawn
// from `rng`; logits is 1×r.
ad::Var gumbel_mask(ad::Var logits, double temperature, Rng& rng);
// Same with an explicit logistic noise row, for reproducible probes.
ad::Var gumbel_mask(ad::Var logits, double temperature, const Matrix& noise);

class TanhMaskStrategy : public MaskStrategy {
 public:
  TanhMaskStrategy(std::string name, const WhitenedFactorization& f, double beta);

  Step forward(ad::Graph& g, Rng& rng) override;
  ad::Parameter& parameter() override { return k_; }
  double final_ratio() const override;
  bool locks_dense() const override { return false; }

 private:
  FactorPair pair_;
  std::size_t m_, n_;
  double beta_;
  ad::Parameter k_;
};

class GumbelMaskStrategy : public MaskStrategy {
 public:
  GumbelMaskStrategy(std::string name, const WhitenedFactorization& f, double temperature);

  Step forward(ad::Graph& g, Rng& rng) override;
  ad::Parameter& parameter() override { return logits_; }
  // Σ σ(l/τ)·(m+n)/(m·n): the expected retained count without noise.
  double final_ratio() const override;
  bool locks_dense() const override { return false; }

 private:
  FactorPair pair_;
  std::size_t m_, n_;
  double temperature_;
  ad::Parameter logits_;
};

// Runs a baseline under the L_m + L_c objective (guidance weight forced to
// zero) with the same batches, rescaling and report schema as `train`.
TrainRun run_baseline(BaselineKind kind, CompressibleModel& model, const CalibrationSet& calib,
                      std::span<const WhitenedFactorization> factorizations,
                      const TrainConfig& cfg, const BaselineOptions& options = {});

}  // namespace ara
