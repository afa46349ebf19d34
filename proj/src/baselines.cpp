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

#include "ara/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ara/error.hpp"
#include "ara/rank_mask.hpp"

namespace ara {

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kUniform: return "uniform";
    case BaselineKind::kTanhMask: return "tanh";
    case BaselineKind::kGumbelMask: return "gumbel";
  }
  return "unknown";
}

BaselineKind parse_baseline_kind(const std::string& tag) {
  if (tag == "uniform") return BaselineKind::kUniform;
  if (tag == "tanh" || tag == "tanh-mask") return BaselineKind::kTanhMask;
  if (tag == "gumbel" || tag == "gumbel-mask") return BaselineKind::kGumbelMask;
  throw ConfigError("unknown baseline '" + tag + "' (expected uniform, tanh or gumbel)");
}

UniformAllocation uniform_allocate(std::span<const std::pair<std::size_t, std::size_t>> shapes,
                                   double target_ratio) {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) {
    throw InputError("uniform_allocate: target ratio must lie in (0, 1]");
  }
  UniformAllocation out;
  std::vector<bool> clamped(shapes.size(), false);
  double budget = 0.0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto [m, n] = shapes[i];
    budget += target_ratio * static_cast<double>(m * n);
    const double exact = target_ratio * static_cast<double>(m * n) / static_cast<double>(m + n);
    std::size_t r = static_cast<std::size_t>(std::floor(exact));
    if (r == 0) {
      r = 1;
      clamped[i] = true;
      out.notes.push_back("layer " + std::to_string(i) + ": rank 0 clamped to 1");
    }
    r = std::min(r, std::min(m, n));
    out.ranks.push_back(r);
    total += r * (m + n);
  }
  while (static_cast<double>(total) > budget) {
    std::size_t pick = shapes.size();
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (clamped[i] || out.ranks[i] <= 1) continue;
      if (pick == shapes.size() || out.ranks[i] > out.ranks[pick]) pick = i;
    }
    if (pick == shapes.size()) break;
    --out.ranks[pick];
    total -= shapes[pick].first + shapes[pick].second;
    out.notes.push_back("layer " + std::to_string(pick) + ": rank lowered to " +
                        std::to_string(out.ranks[pick]) + " to rebalance");
  }
  return out;
}

namespace {

Matrix index_row(std::size_t length) {
  Matrix idx(1, length);
  for (std::size_t i = 0; i < length; ++i) idx[i] = static_cast<double>(i + 1);
  return idx;
}

}  // namespace

ad::Var tanh_mask(ad::Var k, double beta, std::size_t length) {
  if (!(beta > 0.0)) throw InputError("tanh_mask: beta must be positive");
  if (k.rows() != 1 || k.cols() != 1) throw DimensionError("tanh_mask: k must be 1x1");
  ad::Graph& g = *k.graph();
  ad::Var offset = ad::sub(k, g.constant(index_row(length)));
  return ad::affine(ad::tanh(ad::scale(offset, beta)), 0.5, 0.5);
}

std::vector<double> tanh_mask_values(double k, double beta, std::size_t length) {
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = 0.5 * std::tanh(beta * (k - static_cast<double>(i + 1))) + 0.5;
  }
  return out;
}

ad::Var gumbel_mask(ad::Var logits, double temperature, const Matrix& noise) {
  if (!(temperature > 0.0)) throw InputError("gumbel_mask: temperature must be positive");
  require_same_shape(logits.value(), noise, "gumbel_mask");
  ad::Graph& g = *logits.graph();
  return ad::sigmoid(ad::scale(ad::add(logits, g.constant(noise)), 1.0 / temperature));
}

ad::Var gumbel_mask(ad::Var logits, double temperature, Rng& rng) {
  Matrix noise(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const double u = rng.uniform_open();
    noise[i] = std::log(u) - std::log1p(-u);
  }
  return gumbel_mask(logits, temperature, noise);
}

TanhMaskStrategy::TanhMaskStrategy(std::string name, const WhitenedFactorization& f,
                                   double beta)
    : pair_(truncate(f, f.capacity())),
      m_(f.m),
      n_(f.n),
      beta_(beta),
      k_(name + ".k", Matrix::scalar(static_cast<double>(f.capacity()) / 2.0)) {
  if (!(beta > 0.0)) throw ConfigError("config field 'tanh_beta': must be positive");
}

MaskStrategy::Step TanhMaskStrategy::forward(ad::Graph& g, Rng&) {
  const std::size_t r = pair_.rank;
  ad::Var soft = tanh_mask(g.param(k_), beta_, r);
  Step s;
  s.retained = ad::sum(soft);
  s.ratio = s.retained.value().item() * ratio_per_retained(m_, n_);
  Matrix hard(1, r);
  const auto prefix = layer_binary_mask(s.ratio, m_, n_);
  std::copy(prefix.begin(), prefix.end(), hard.data().begin());
  s.weight = masked_low_rank_weight(g, pair_, ad::straight_through(soft, hard));
  s.guidance = g.constant(Matrix::scalar(0.0));
  return s;
}

double TanhMaskStrategy::final_ratio() const {
  const auto v = tanh_mask_values(k_.value.item(), beta_, pair_.rank);
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum * ratio_per_retained(m_, n_);
}

GumbelMaskStrategy::GumbelMaskStrategy(std::string name, const WhitenedFactorization& f,
                                       double temperature)
    : pair_(truncate(f, f.capacity())),
      m_(f.m),
      n_(f.n),
      temperature_(temperature),
      logits_(name + ".logits", Matrix(1, f.capacity(), 0.0)) {
  if (!(temperature > 0.0)) throw ConfigError("config field 'gumbel_temperature': must be positive");
}

MaskStrategy::Step GumbelMaskStrategy::forward(ad::Graph& g, Rng& rng) {
  ad::Var soft = gumbel_mask(g.param(logits_), temperature_, rng);
  Matrix hard(1, pair_.rank);
  for (std::size_t i = 0; i < hard.size(); ++i) hard[i] = soft.value()[i] > 0.5 ? 1.0 : 0.0;
  Step s;
  s.retained = ad::sum(soft);
  s.ratio = s.retained.value().item() * ratio_per_retained(m_, n_);
  s.weight = masked_low_rank_weight(g, pair_, ad::straight_through(soft, hard));
  s.guidance = g.constant(Matrix::scalar(0.0));
  return s;
}

double GumbelMaskStrategy::final_ratio() const {
  double sum = 0.0;
  const Matrix& l = logits_.value;
  for (std::size_t i = 0; i < l.size(); ++i) sum += 1.0 / (1.0 + std::exp(-l[i] / temperature_));
  return sum * ratio_per_retained(m_, n_);
}

TrainRun run_baseline(BaselineKind kind, CompressibleModel& model, const CalibrationSet& calib,
                      std::span<const WhitenedFactorization> factorizations,
                      const TrainConfig& cfg, const BaselineOptions& options) {
  cfg.validate();
  if (factorizations.size() != model.layers.size()) {
    throw InputError("run_baseline: factorizations do not match the model");
  }
  if (kind == BaselineKind::kUniform) {
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    for (const auto& l : model.layers) shapes.emplace_back(l.out_dim, l.in_dim);
    UniformAllocation alloc = uniform_allocate(shapes, cfg.target_ratio);
    TrainRun run;
    run.method = to_string(kind);
    std::vector<LayerMode> modes(shapes.size(), LayerMode::kLowRank);
    fill_allocation(run, model, factorizations, modes, alloc.ranks);
    for (auto& l : run.layers) l.trained_ratio = l.scaled_ratio = cfg.target_ratio;
    run.notes = std::move(alloc.notes);
    return run;
  }

  TrainConfig local = cfg;
  local.lambda1 = 0.0;
  local.dense_switch = false;
  std::vector<std::unique_ptr<MaskStrategy>> strategies;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const std::string& name = model.layers[i].name;
    if (kind == BaselineKind::kTanhMask) {
      strategies.push_back(
          std::make_unique<TanhMaskStrategy>(name, factorizations[i], options.tanh_beta));
    } else {
      strategies.push_back(std::make_unique<GumbelMaskStrategy>(name, factorizations[i],
                                                                options.gumbel_temperature));
    }
  }
  if (kind == BaselineKind::kTanhMask) local.lr = options.tanh_lr;
  if (kind == BaselineKind::kGumbelMask && options.gumbel_lr) local.lr = *options.gumbel_lr;
  return run_mask_training(model, calib, factorizations, strategies, local, to_string(kind));
}

}  // namespace ara
