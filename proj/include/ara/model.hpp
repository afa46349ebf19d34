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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ara/adamw.hpp"
#include "ara/autodiff.hpp"
#include "ara/corpus.hpp"
#include "ara/layer_mode.hpp"
#include "ara/matrix.hpp"

namespace ara {

struct ModelConfig {
  std::size_t vocab = 0;
  std::size_t width = 64;
  std::size_t hidden = 128;
  std::size_t depth = 3;
  // Number of preceding tokens whose embeddings are summed into each input
  // position (the current token included).
  std::size_t context = 4;
  // Standard deviation of the linear-layer initialization; down projections
  // are further scaled by 1/sqrt(2·depth).
  double init_std = 0.02;
  std::uint64_t seed = 0;
};

// Linear map y = x·Wᵀ with W stored out×in. A low-rank layer keeps
// left (out×r) and right (r×in) instead of W.
struct LinearLayer {
  std::string name;
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  LayerMode mode = LayerMode::kDense;
  ad::Parameter weight;
  Matrix left;
  Matrix right;

  std::size_t rank() const { return mode == LayerMode::kDense ? std::min(out_dim, in_dim) : left.cols(); }
  std::size_t parameter_count() const;
  std::size_t dense_parameter_count() const { return out_dim * in_dim; }
  // The matrix the layer applies, materialized.
  Matrix effective_matrix() const;
};

// Windows of token ids; each window holds seq_len inputs and the seq_len
// targets shifted by one.
struct Batch {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::size_t seq_len = 0;

  std::size_t windows() const { return seq_len == 0 ? 0 : inputs.size() / seq_len; }
};

Batch make_batch(std::span<const int> tokens, std::span<const std::size_t> starts,
                 std::size_t seq_len);
// Batch from pre-cut windows of seq_len + 1 tokens, picked by index.
Batch make_batch(std::span<const std::vector<int>> windows, std::span<const std::size_t> picks);

// Byte-level language model: summed shifted embeddings, `depth` residual
// gated-MLP blocks, RMS normalization and an output head. The gate, up and
// down projections of every block are the compressible layers.
class CompressibleModel {
 public:
  // Replaces the linear map of compressible layer `index` applied to `input`.
  using LinearHook = std::function<ad::Var(std::size_t index, ad::Var input)>;
  // Observes the input of compressible layer `index` (one token per row).
  using CaptureHook = std::function<void(std::size_t index, const Matrix& input)>;

  struct ForwardOptions {
    bool train_backbone = false;
    const LinearHook* linear = nullptr;
    const CaptureHook* capture = nullptr;
  };

  CompressibleModel() = default;
  CompressibleModel(const CompressibleModel&) = delete;
  CompressibleModel& operator=(const CompressibleModel&) = delete;
  CompressibleModel(CompressibleModel&&) = default;
  CompressibleModel& operator=(CompressibleModel&&) = default;

  // Logits, one row per input token.
  ad::Var forward(ad::Graph& g, const Batch& batch, const ForwardOptions& options);
  ad::Var forward(ad::Graph& g, const Batch& batch) { return forward(g, batch, {}); }

  std::vector<ad::Parameter*> parameters();
  CompressibleModel clone() const;

  std::size_t parameter_count() const;
  // Σ over compressible layers of their stored parameters.
  std::size_t compressible_parameter_count() const;
  // Σ over compressible layers of out·in.
  std::size_t compressible_dense_count() const;

  ModelConfig config;
  Tokenizer tokenizer;
  std::vector<ad::Parameter> embeddings;  // `context` tables, vocab×width
  std::vector<LinearLayer> layers;        // gate, up, down per block
  ad::Parameter head;                     // vocab×width
};

inline constexpr std::size_t kLayersPerBlock = 3;

CompressibleModel build_model(const ModelConfig& config, Tokenizer tokenizer);

// K·V·d + depth·3·h·d + V·d.
std::size_t closed_form_parameter_count(const ModelConfig& config);

struct PretrainOptions {
  std::size_t steps = 1500;
  std::size_t batch_windows = 8;
  std::size_t seq_len = 64;
  double lr = 3e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct PretrainReport {
  std::vector<double> losses;
};

// Trains every backbone parameter on next-token prediction. Throws
// NumericalError when the loss diverges.
PretrainReport pretrain(CompressibleModel& model, std::span<const int> tokens,
                        const PretrainOptions& options);

struct EvalResult {
  double ce = 0.0;
  double perplexity = 0.0;
  std::size_t tokens = 0;
};

// Mean next-token cross-entropy over non-overlapping windows of `tokens`
// (at most max_windows of them, 0 = all).
EvalResult evaluate_ce(CompressibleModel& model, std::span<const int> tokens,
                       std::size_t seq_len, std::size_t max_windows = 0);

// Calibration windows and per-layer input statistics.
struct CalibrationSet {
  std::size_t seq_len = 0;
  std::vector<std::size_t> starts;        // window offsets into the train split
  std::vector<std::vector<int>> windows;  // seq_len + 1 tokens each
  std::vector<Matrix> grams;        // per layer, in×in
  std::vector<Matrix> activations;  // per layer, in×tokens; only when kept
  std::size_t token_count = 0;
};

// Draws `samples` windows from `tokens` with the given seed, runs the model
// and accumulates H = X·Xᵀ for every compressible layer. Throws InputError
// when not even one window fits.
CalibrationSet capture_calibration(CompressibleModel& model, std::span<const int> tokens,
                                   std::size_t samples, std::size_t seq_len, std::uint64_t seed,
                                   bool keep_activations = false);

}  // namespace ara
