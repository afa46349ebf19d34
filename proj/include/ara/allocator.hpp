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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ara/autodiff.hpp"
#include "ara/factorization.hpp"
#include "ara/guidance.hpp"
#include "ara/layer_mode.hpp"
#include "ara/model.hpp"
#include "ara/rng.hpp"

namespace ara {

struct TrainConfig {
  double target_ratio = 0.8;
  double lambda1 = 100.0;
  double lambda2 = 100.0;
  std::size_t mask_steps = 100;  // D
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t epochs = 10;
  std::size_t samples = 256;
  std::size_t seq_len = 64;
  std::size_t batch_windows = 1;
  std::uint64_t seed = 0;
  bool clamp_guidance = true;
  // Dense/low-rank flow switch; off for mask-only comparisons.
  bool dense_switch = true;
  double clip_norm = 0.0;
  double damping = kDefaultDamping;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  double model_loss = 0.0;     // L_m
  double guidance_mean = 0.0;  // (1/N) Σ L_g
  double constraint = 0.0;     // L_c
  double total = 0.0;
  double realized_ratio = 0.0;  // realized parameters / C_t
  double expected_ratio = 0.0;  // Σ (Σp)(m+n) / C_t
  std::vector<double> layer_ratio;     // per-layer R this step
  std::vector<double> layer_capacity;  // per-layer G_R this step
};

struct LayerAllocation {
  std::string name;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t capacity = 0;
  std::size_t mask_steps = 0;
  LayerMode mode = LayerMode::kLowRank;
  std::size_t rank = 0;
  double trained_ratio = 0.0;  // R at the end of training
  double scaled_ratio = 0.0;   // after proportional rescaling
  double ratio = 0.0;          // realized parameters / (m·n)
  double capacity_preserved = 1.0;
  std::size_t parameters = 0;
  // Final ARA mask state; empty for other methods.
  std::vector<double> mask_alpha;
  std::vector<double> mask_p;
};

struct TrainRun {
  std::string method;
  std::vector<StepRecord> steps;
  std::vector<LayerAllocation> layers;
  double scale_factor = 1.0;
  std::size_t total_parameters = 0;  // realized, compressible layers only
  std::size_t dense_total = 0;       // C_t
  double realized_ratio = 0.0;
  std::vector<std::string> notes;

  std::size_t dense_layer_count() const;
};

// ---- objective -----------------------------------------------------------

struct ObjectiveTerms {
  ad::Var total;
  double model = 0.0;
  double guidance_mean = 0.0;
  double constraint = 0.0;
};

// L = L_m + λ₁·(1/N)·Σ L_g + λ₂·((1/C_t)·Σ C − R_target)².
ObjectiveTerms objective(ad::Var model_loss, std::span<const ad::Var> guidance,
                         std::span<const ad::Var> counts, double dense_total,
                         const TrainConfig& cfg);

// ---- rescaling -----------------------------------------------------------

struct RescaleInput {
  std::size_t m = 0;
  std::size_t n = 0;
  double ratio = 0.0;
  bool locked_dense = false;
};

struct RescaleResult {
  double scale = 1.0;
  std::vector<double> ratios;  // c·R, or the trained R for locked layers
  std::vector<std::size_t> ranks;
  std::vector<LayerMode> modes;
  std::size_t total = 0;
  double realized_ratio = 0.0;
};

// Realized parameters of one layer at mask ratio R: m·n when R >= 1,
// otherwise min(layer_rank(R)·(m+n), m·n).
std::size_t realized_parameters(std::size_t m, std::size_t n, double ratio);

// Finds one global factor c for all unlocked layers so the realized total
// does not exceed R_target·C_t and sits within one rank unit per layer of
// it. Locked (dense) layers are never demoted; InputError if they alone
// already exceed the target.
RescaleResult rescale_to_target(std::span<const RescaleInput> layers, double target_ratio);

// ---- training engine -----------------------------------------------------

// Per-layer mask mechanism plugged into the shared training loop.
class MaskStrategy {
 public:
  struct Step {
    ad::Var retained;  // 1×1 differentiable retained count Σ p
    double ratio = 0.0;
    ad::Var weight;    // effective weight for the forward pass
    LayerMode mode = LayerMode::kLowRank;
    ad::Var guidance;  // 1×1 L_g
    double capacity = 0.0;
  };

  virtual ~MaskStrategy() = default;
  virtual Step forward(ad::Graph& g, Rng& rng) = 0;
  virtual ad::Parameter& parameter() = 0;
  virtual double final_ratio() const = 0;
  // Whether a final R >= 1 locks the layer dense during rescaling.
  virtual bool locks_dense() const = 0;
};

class AraMaskStrategy : public MaskStrategy {
 public:
  AraMaskStrategy(CompressibleLayer& layer, bool clamp_guidance, bool dense_switch)
      : layer_(layer), clamp_(clamp_guidance), dense_switch_(dense_switch) {}

  Step forward(ad::Graph& g, Rng& rng) override;
  ad::Parameter& parameter() override { return layer_.mask.theta(); }
  double final_ratio() const override { return layer_.mask.snapshot().ratio; }
  bool locks_dense() const override { return dense_switch_; }

 private:
  CompressibleLayer& layer_;
  bool clamp_;
  bool dense_switch_;
};

// Computes the whitened factorization of every compressible layer from the
// calibration Gram matrices.
std::vector<WhitenedFactorization> factorize_layers(const CompressibleModel& model,
                                                    const CalibrationSet& calib,
                                                    double damping = kDefaultDamping);

// Builds CompressibleLayers (views into `model`). The returned vector must
// not be resized while strategies point into it.
std::vector<CompressibleLayer> make_compressible_layers(
    const CompressibleModel& model, std::span<const WhitenedFactorization> factorizations,
    std::size_t mask_steps);

// Shared loop: trains only the strategies' parameters on the calibration
// windows, then rescales to the target and fills the allocation. Throws
// NumericalError (with a per-layer dump) on a non-finite loss.
TrainRun run_mask_training(CompressibleModel& model, const CalibrationSet& calib,
                           std::span<const WhitenedFactorization> factorizations,
                           std::span<const std::unique_ptr<MaskStrategy>> strategies,
                           const TrainConfig& cfg, std::string method);

// ARA end to end on precomputed factorizations.
TrainRun train(CompressibleModel& model, const CalibrationSet& calib,
               std::span<const WhitenedFactorization> factorizations, const TrainConfig& cfg);

// Final allocation from per-layer modes and ranks.
void fill_allocation(TrainRun& run, const CompressibleModel& model,
                     std::span<const WhitenedFactorization> factorizations,
                     std::span<const LayerMode> modes, std::span<const std::size_t> ranks);

// Copy of `model` with each layer stored as its allocation says: dense
// layers keep W, low-rank layers keep the truncated factor pair.
CompressibleModel materialize(const CompressibleModel& model,
                              std::span<const WhitenedFactorization> factorizations,
                              std::span<const LayerAllocation> allocation);

}  // namespace ara
