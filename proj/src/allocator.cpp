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

#include "ara/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ara/error.hpp"
#include "ara/rank_mask.hpp"

namespace ara {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
  };
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) fail("ratio", "must lie in (0, 1]");
  if (!(lambda1 >= 0.0)) fail("lambda1", "must be non-negative");
  if (!(lambda2 >= 0.0)) fail("lambda2", "must be non-negative");
  if (mask_steps < 1) fail("D", "must be at least 1");
  if (!(lr > 0.0)) fail("lr", "must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be non-negative");
  if (epochs < 1) fail("epochs", "must be at least 1");
  if (samples < 1) fail("samples", "must be at least 1");
  if (seq_len < 1) fail("seq_len", "must be at least 1");
  if (batch_windows < 1) fail("batch", "must be at least 1");
  if (!(clip_norm >= 0.0)) fail("clip_norm", "must be non-negative");
  if (!(damping >= 0.0)) fail("damping", "must be non-negative");
}

std::size_t TrainRun::dense_layer_count() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const auto& l) {
    return l.mode == LayerMode::kDense;
  }));
}

ObjectiveTerms objective(ad::Var model_loss, std::span<const ad::Var> guidance,
                         std::span<const ad::Var> counts, double dense_total,
                         const TrainConfig& cfg) {
  ad::Graph& g = *model_loss.graph();
  ObjectiveTerms t;
  t.model = model_loss.value().item();

  ad::Var guidance_sum = g.constant(Matrix::scalar(0.0));
  for (ad::Var v : guidance) guidance_sum = ad::add(guidance_sum, v);
  const double n = std::max<std::size_t>(1, guidance.size());
  ad::Var guidance_mean = ad::scale(guidance_sum, 1.0 / n);
  t.guidance_mean = guidance_mean.value().item();

  ad::Var count_sum = g.constant(Matrix::scalar(0.0));
  for (ad::Var c : counts) count_sum = ad::add(count_sum, c);
  ad::Var constraint = ad::square(ad::affine(count_sum, 1.0 / dense_total, -cfg.target_ratio));
  t.constraint = constraint.value().item();

  t.total = ad::add(ad::add(model_loss, ad::scale(guidance_mean, cfg.lambda1)),
                    ad::scale(constraint, cfg.lambda2));
  return t;
}

std::size_t realized_parameters(std::size_t m, std::size_t n, double ratio) {
  const std::size_t dense = m * n;
  if (ratio >= 1.0) return dense;
  const std::size_t k = layer_rank(ratio, m, n);
  return std::min(k * (m + n), dense);
}

namespace {

std::size_t rescaled_total(std::span<const RescaleInput> layers, double c) {
  std::size_t total = 0;
  for (const auto& l : layers)
    total += l.locked_dense ? l.m * l.n : realized_parameters(l.m, l.n, c * l.ratio);
  return total;
}

// Smallest c in [lo, hi] with rescaled_total(c) >= value, assuming
// rescaled_total(hi) >= value.
double leftmost_reaching(std::span<const RescaleInput> layers, std::size_t value, double lo,
                         double hi) {
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    (rescaled_total(layers, mid) >= value ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

RescaleResult rescale_to_target(std::span<const RescaleInput> layers, double target_ratio) {
  std::size_t dense_total = 0;
  double max_ratio = 0.0, min_positive = 0.0;
  for (const auto& l : layers) {
    dense_total += l.m * l.n;
    if (l.locked_dense || l.ratio <= 0.0) continue;
    max_ratio = std::max(max_ratio, l.ratio);
    min_positive = min_positive == 0.0 ? l.ratio : std::min(min_positive, l.ratio);
  }
  if (dense_total == 0) throw InputError("rescale_to_target: no layers");
  const double budget = target_ratio * static_cast<double>(dense_total);
  if (static_cast<double>(rescaled_total(layers, 0.0)) > budget) {
    throw InputError(
        "rescale_to_target: layers kept dense already exceed the target ratio; lower the "
        "guidance weight or raise the target");
  }

  double c = 1.0;
  const bool adjustable = max_ratio > 0.0;
  if (adjustable) {
    // Largest c whose realized total stays within budget.
    double lo = 0.0, hi = 1.0 / min_positive + 1.0;
    if (static_cast<double>(rescaled_total(layers, hi)) <= budget) {
      lo = hi;
    } else {
      for (int it = 0; it < 200; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        (static_cast<double>(rescaled_total(layers, mid)) <= budget ? lo : hi) = mid;
      }
    }
    const std::size_t reached = rescaled_total(layers, lo);
    // Within the plateau of c values giving this allocation prefer c = 1,
    // otherwise its left end.
    if (rescaled_total(layers, 1.0) == reached) {
      c = 1.0;
    } else {
      c = leftmost_reaching(layers, reached, 0.0, lo);
      if (rescaled_total(layers, c) != reached) c = lo;
    }
  }

  RescaleResult r;
  r.scale = c;
  for (const auto& l : layers) {
    const std::size_t cap = std::min(l.m, l.n);
    if (l.locked_dense) {
      r.ratios.push_back(l.ratio);
      r.ranks.push_back(cap);
      r.modes.push_back(LayerMode::kDense);
      continue;
    }
    const double scaled = c * l.ratio;
    r.ratios.push_back(scaled);
    const std::size_t k = scaled >= 1.0 ? cap : layer_rank(scaled, l.m, l.n);
    // Past break-even the dense matrix is both cheaper and exact.
    const bool dense = scaled >= 1.0 || k * (l.m + l.n) >= l.m * l.n;
    r.ranks.push_back(dense ? cap : k);
    r.modes.push_back(dense ? LayerMode::kDense : LayerMode::kLowRank);
  }
  r.total = rescaled_total(layers, c);
  r.realized_ratio = static_cast<double>(r.total) / static_cast<double>(dense_total);
  return r;
}

MaskStrategy::Step AraMaskStrategy::forward(ad::Graph& g, Rng&) {
  RankMask::Forward f = layer_.mask.evaluate(g);
  Step s;
  s.retained = f.retained;
  s.ratio = f.ratio_value;
  const GuidanceEval eval = evaluate_guidance(layer_.factorization, f.ratio_value, clamp_);
  s.capacity = eval.capacity;
  s.guidance = guidance_loss_node(f.ratio, eval.capacity, clamp_);
  if (dense_switch_) {
    s.weight = effective_weight(g, layer_, f);
    s.mode = layer_.mode;
  } else {
    s.weight = masked_low_rank_weight(g, layer_.full_pair, f.mask);
    s.mode = LayerMode::kLowRank;
  }
  return s;
}

std::vector<WhitenedFactorization> factorize_layers(const CompressibleModel& model,
                                                    const CalibrationSet& calib,
                                                    double damping) {
  if (calib.grams.size() != model.layers.size()) {
    throw InputError("factorize_layers: calibration covers " +
                     std::to_string(calib.grams.size()) + " layers, model has " +
                     std::to_string(model.layers.size()));
  }
  std::vector<WhitenedFactorization> out;
  out.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LinearLayer& l = model.layers[i];
    if (l.mode != LayerMode::kDense) {
      throw InputError("factorize_layers: layer '" + l.name + "' is already factored");
    }
    out.push_back(whiten_and_decompose_gram(l.weight.value, calib.grams[i], damping));
  }
  return out;
}

std::vector<CompressibleLayer> make_compressible_layers(
    const CompressibleModel& model, std::span<const WhitenedFactorization> factorizations,
    std::size_t mask_steps) {
  std::vector<CompressibleLayer> layers;
  layers.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    layers.emplace_back(model.layers[i].name, model.layers[i].weight.value, factorizations[i],
                        mask_steps);
  }
  return layers;
}

namespace {

std::string diagnostic_dump(const CompressibleModel& model,
                            std::span<const WhitenedFactorization> factorizations,
                            std::span<const MaskStrategy::Step> steps) {
  std::ostringstream os;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& f = factorizations[i];
    os << "\n  " << model.layers[i].name << ": R=" << steps[i].ratio
       << " sigma_max=" << (f.sigma.empty() ? 0.0 : f.sigma.front())
       << " sigma_min=" << (f.sigma.empty() ? 0.0 : f.sigma.back());
  }
  return os.str();
}

}  // namespace

TrainRun run_mask_training(CompressibleModel& model, const CalibrationSet& calib,
                           std::span<const WhitenedFactorization> factorizations,
                           std::span<const std::unique_ptr<MaskStrategy>> strategies,
                           const TrainConfig& cfg, std::string method) {
  cfg.validate();
  const std::size_t n_layers = model.layers.size();
  if (strategies.size() != n_layers || factorizations.size() != n_layers) {
    throw InputError("run_mask_training: strategies/factorizations do not match the model");
  }
  if (calib.windows.empty()) throw InputError("run_mask_training: no calibration windows");

  TrainRun run;
  run.method = std::move(method);
  run.dense_total = model.compressible_dense_count();
  const double dense_total = static_cast<double>(run.dense_total);

  std::vector<ad::Parameter*> params;
  for (const auto& s : strategies) params.push_back(&s->parameter());
  ad::AdamWOptions adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  adam.clip_norm = cfg.clip_norm;
  ad::AdamW opt(params, adam);
  opt.zero_grad();

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(calib.windows.size());
  std::size_t step_index = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_windows) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_windows);
      const Batch batch =
          make_batch(calib.windows, std::span<const std::size_t>(order).subspan(b, end - b));

      ad::Graph g;
      std::vector<MaskStrategy::Step> steps;
      steps.reserve(n_layers);
      for (const auto& s : strategies) steps.push_back(s->forward(g, rng));

      CompressibleModel::LinearHook hook = [&](std::size_t index, ad::Var input) {
        return ad::matmul_nt(input, steps[index].weight);
      };
      ad::Var logits = model.forward(g, batch, {.linear = &hook});
      ad::Var model_loss = ad::cross_entropy(logits, batch.targets);

      std::vector<ad::Var> guidance, counts;
      std::size_t realized = 0;
      double expected = 0.0;
      for (std::size_t i = 0; i < n_layers; ++i) {
        const auto& l = model.layers[i];
        guidance.push_back(steps[i].guidance);
        counts.push_back(ad::scale(steps[i].retained, static_cast<double>(l.out_dim + l.in_dim)));
        expected += counts.back().value().item();
        realized += steps[i].mode == LayerMode::kDense
                        ? l.out_dim * l.in_dim
                        : realized_parameters(l.out_dim, l.in_dim, steps[i].ratio);
      }
      ObjectiveTerms terms = objective(model_loss, guidance, counts, dense_total, cfg);
      const double total = terms.total.value().item();
      if (!std::isfinite(total)) {
        throw NumericalError("non-finite loss at step " + std::to_string(step_index) +
                             diagnostic_dump(model, factorizations, steps));
      }
      StepRecord rec{step_index, terms.model, terms.guidance_mean, terms.constraint, total,
                     static_cast<double>(realized) / dense_total, expected / dense_total, {}, {}};
      for (std::size_t i = 0; i < n_layers; ++i) {
        rec.layer_ratio.push_back(steps[i].ratio);
        rec.layer_capacity.push_back(capacity_preserved(factorizations[i], steps[i].ratio));
      }
      run.steps.push_back(std::move(rec));
      g.backward(terms.total);
      opt.step();
      ++step_index;
    }
  }

  std::vector<RescaleInput> inputs;
  std::vector<double> trained;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const double r = strategies[i]->final_ratio();
    trained.push_back(r);
    inputs.push_back({model.layers[i].out_dim, model.layers[i].in_dim, r,
                      strategies[i]->locks_dense() && r >= 1.0});
  }
  const RescaleResult rescaled = rescale_to_target(inputs, cfg.target_ratio);
  run.scale_factor = rescaled.scale;
  fill_allocation(run, model, factorizations, rescaled.modes, rescaled.ranks);
  for (std::size_t i = 0; i < n_layers; ++i) {
    run.layers[i].trained_ratio = trained[i];
    run.layers[i].scaled_ratio = rescaled.ratios[i];
  }
  return run;
}

TrainRun train(CompressibleModel& model, const CalibrationSet& calib,
               std::span<const WhitenedFactorization> factorizations, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<CompressibleLayer> layers =
      make_compressible_layers(model, factorizations, cfg.mask_steps);
  std::vector<std::unique_ptr<MaskStrategy>> strategies;
  for (auto& l : layers) {
    strategies.push_back(
        std::make_unique<AraMaskStrategy>(l, cfg.clamp_guidance, cfg.dense_switch));
  }
  TrainRun run = run_mask_training(model, calib, factorizations, strategies, cfg, "ara");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    run.layers[i].mask_steps = layers[i].mask.steps();
    const RankMask::Snapshot snap = layers[i].mask.snapshot();
    run.layers[i].mask_alpha = snap.alpha;
    run.layers[i].mask_p = snap.p;
    if (layers[i].mask.steps_clamped()) {
      run.notes.push_back(layers[i].name + ": mask steps clamped from " +
                          std::to_string(cfg.mask_steps) + " to " +
                          std::to_string(layers[i].mask.steps()));
    }
  }
  return run;
}

void fill_allocation(TrainRun& run, const CompressibleModel& model,
                     std::span<const WhitenedFactorization> factorizations,
                     std::span<const LayerMode> modes, std::span<const std::size_t> ranks) {
  run.layers.clear();
  run.total_parameters = 0;
  run.dense_total = model.compressible_dense_count();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    LayerAllocation a;
    a.name = l.name;
    a.m = l.out_dim;
    a.n = l.in_dim;
    a.capacity = std::min(a.m, a.n);
    a.mode = modes[i];
    a.rank = a.mode == LayerMode::kDense ? a.capacity : ranks[i];
    a.parameters = a.mode == LayerMode::kDense ? a.m * a.n : a.rank * (a.m + a.n);
    a.ratio = static_cast<double>(a.parameters) / static_cast<double>(a.m * a.n);
    if (a.mode == LayerMode::kDense) {
      a.capacity_preserved = 1.0;
    } else {
      const auto& f = factorizations[i];
      const double l0 = f.total_norm();
      a.capacity_preserved = l0 == 0.0 ? 1.0 : (l0 - truncation_loss(f, a.rank)) / l0;
    }
    run.total_parameters += a.parameters;
    run.layers.push_back(std::move(a));
  }
  run.realized_ratio =
      static_cast<double>(run.total_parameters) / static_cast<double>(run.dense_total);
}

CompressibleModel materialize(const CompressibleModel& model,
                              std::span<const WhitenedFactorization> factorizations,
                              std::span<const LayerAllocation> allocation) {
  if (allocation.size() != model.layers.size()) {
    throw InputError("materialize: allocation does not match the model");
  }
  CompressibleModel out = model.clone();
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    LinearLayer& l = out.layers[i];
    const LayerAllocation& a = allocation[i];
    if (a.mode == LayerMode::kDense) continue;
    if (a.rank == 0) {
      l.left = Matrix(l.out_dim, 0);
      l.right = Matrix(0, l.in_dim);
    } else {
      FactorPair pair = truncate(factorizations[i], a.rank);
      l.left = std::move(pair.left);
      l.right = std::move(pair.right);
    }
    l.mode = LayerMode::kLowRank;
    l.weight = ad::Parameter(l.name, Matrix());
  }
  return out;
}

}  // namespace ara
