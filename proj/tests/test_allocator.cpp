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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ara/allocator.hpp"
#include "ara/corpus.hpp"
#include "ara/error.hpp"
#include "ara/model_io.hpp"
#include "test_support.hpp"

namespace ara {
namespace {

TEST(TrainConfig, ValidationNamesTheField) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.target_ratio = 1.2;
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("ratio"), std::string::npos);
  }
  c = TrainConfig{};
  c.lambda1 = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = std::nan("");
  EXPECT_THROW(c.validate(), ConfigError);
}

struct ObjectiveCase {
  double model;
  std::vector<double> guidance;
  std::vector<double> counts;
  double dense_total;
  TrainConfig cfg;
};

ObjectiveTerms evaluate_objective(ad::Graph& g, const ObjectiveCase& c,
                                  std::vector<ad::Var>* count_vars = nullptr) {
  std::vector<ad::Var> guidance, counts;
  for (double x : c.guidance) guidance.push_back(g.variable(Matrix::scalar(x)));
  for (double x : c.counts) counts.push_back(g.variable(Matrix::scalar(x)));
  if (count_vars != nullptr) *count_vars = counts;
  return objective(g.variable(Matrix::scalar(c.model)), guidance, counts, c.dense_total, c.cfg);
}

TEST(Objective, WorkedExample) {
  ObjectiveCase c{1.0, {0.0, 0.5}, {50.0, 40.0}, 100.0, {}};
  c.cfg.target_ratio = 0.8;
  c.cfg.lambda1 = 100;
  c.cfg.lambda2 = 100;
  ad::Graph g;
  const ObjectiveTerms t = evaluate_objective(g, c);
  EXPECT_NEAR(t.total.value().item(), 27.0, 1e-12);
  EXPECT_DOUBLE_EQ(t.guidance_mean, 0.25);
  EXPECT_NEAR(t.constraint, 0.01, 1e-15);
}

TEST(Objective, ZeroWeightsLeaveModelLoss) {
  ObjectiveCase c{2.5, {0.3, 0.7}, {10.0, 90.0}, 150.0, {}};
  c.cfg.lambda1 = 0;
  c.cfg.lambda2 = 0;
  ad::Graph g;
  EXPECT_DOUBLE_EQ(evaluate_objective(g, c).total.value().item(), 2.5);

  ObjectiveCase exact{0.0, {0.0, 0.0}, {30.0, 30.0}, 100.0, {}};
  exact.cfg.target_ratio = 0.6;
  ad::Graph g2;
  EXPECT_NEAR(evaluate_objective(g2, exact).total.value().item(), 0.0, 1e-24);
}

TEST(Objective, ConstraintGradientOnCounts) {
  ObjectiveCase c{0.0, {0.0}, {45.0, 40.0}, 100.0, {}};
  c.cfg.target_ratio = 0.8;
  c.cfg.lambda2 = 100;
  ad::Graph g;
  std::vector<ad::Var> counts;
  const ObjectiveTerms t = evaluate_objective(g, c, &counts);
  g.backward(t.total);
  // d/dC [λ₂ (ΣC/C_t − R)²] = 2λ₂ (ΣC/C_t − R)/C_t.
  const double want = 2.0 * 100.0 * (0.85 - 0.8) / 100.0;
  EXPECT_NEAR(counts[0].grad().item(), want, 1e-12);
  EXPECT_NEAR(counts[1].grad().item(), want, 1e-12);
}

TEST(RealizedParameters, Examples) {
  EXPECT_EQ(realized_parameters(20, 20, 0.5), 200u);  // rank 5
  EXPECT_EQ(realized_parameters(20, 20, 1.0), 400u);
  EXPECT_EQ(realized_parameters(20, 20, 0.0), 0u);
  EXPECT_EQ(realized_parameters(6, 4, 0.99), 20u);  // rank 2
}

TEST(Rescale, ExactTargetKeepsUnitScale) {
  const std::vector<RescaleInput> layers{{20, 20, 0.5, false}, {20, 20, 0.3, false}};
  const RescaleResult r = rescale_to_target(layers, 0.4);
  EXPECT_DOUBLE_EQ(r.scale, 1.0);
  EXPECT_EQ(r.ranks, (std::vector<std::size_t>{5, 3}));
  EXPECT_EQ(r.total, 320u);
  EXPECT_DOUBLE_EQ(r.realized_ratio, 0.4);
}

TEST(Rescale, IdenticalLayersScaleProportionally) {
  const std::vector<RescaleInput> layers{{20, 20, 0.5, false}, {20, 20, 0.5, false}};
  const RescaleResult r = rescale_to_target(layers, 0.4);
  EXPECT_NEAR(r.ratios[0], 0.4, 0.05);
  EXPECT_EQ(r.ratios[0], r.ratios[1]);
  EXPECT_EQ(r.ranks, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(r.modes[0], LayerMode::kLowRank);
  EXPECT_DOUBLE_EQ(r.realized_ratio, 0.4);
}

TEST(Rescale, LockedDenseLayersAreKept) {
  const std::vector<RescaleInput> layers{
      {20, 20, 1.2, true}, {20, 20, 0.5, false}, {20, 20, 0.5, false}};
  const RescaleResult r = rescale_to_target(layers, 0.6);
  EXPECT_EQ(r.modes[0], LayerMode::kDense);
  EXPECT_EQ(r.ranks[0], 20u);
  EXPECT_LE(r.realized_ratio, 0.6 + 1e-12);
  EXPECT_GE(static_cast<double>(r.total), 0.6 * 1200 - 80);
  // Dense layers alone exceed the budget.
  const std::vector<RescaleInput> heavy{{20, 20, 1.0, true}, {20, 20, 0.1, false}};
  EXPECT_THROW(rescale_to_target(heavy, 0.4), InputError);
}

TEST(Rescale, RealizedRatioWithinOneRankUnitPerLayer) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<RescaleInput> layers(1 + rng.below(8));
    std::size_t slack = 0, dense = 0;
    for (auto& l : layers) {
      l.m = 4 + rng.below(60);
      l.n = 4 + rng.below(60);
      l.ratio = 0.05 + 1.3 * rng.uniform();
      slack += l.m + l.n;
      dense += l.m * l.n;
    }
    const double target = 0.2 + 0.8 * rng.uniform();
    const RescaleResult r = rescale_to_target(layers, target);
    ASSERT_LE(r.realized_ratio, target + 1e-12);
    ASSERT_GE(r.realized_ratio, target - static_cast<double>(slack) / dense - 1e-12);
    std::size_t recount = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const bool dense_mode = r.modes[i] == LayerMode::kDense;
      recount += dense_mode ? layers[i].m * layers[i].n : r.ranks[i] * (layers[i].m + layers[i].n);
      if (!dense_mode) ASSERT_LT(r.ranks[i] * (layers[i].m + layers[i].n), layers[i].m * layers[i].n);
    }
    ASSERT_EQ(recount, r.total);
  }
}

// Small pretrained model shared by the training tests below.
struct TinyRun {
  std::vector<int> train_tokens;
  std::vector<int> heldout;
  CompressibleModel model;
  CalibrationSet calib;
  std::vector<WhitenedFactorization> factors;

  TinyRun() {
    const std::string text = synthesize_corpus(80000, 5);
    const Tokenizer tok = Tokenizer::from_text(text);
    Corpus c = split_corpus(tok.encode(text), 0.1);
    train_tokens = std::move(c.train);
    heldout = std::move(c.heldout);
    ModelConfig mc;
    mc.vocab = tok.vocab_size();
    mc.width = 16;
    mc.hidden = 32;
    mc.depth = 2;
    mc.seed = 3;
    model = build_model(mc, tok);
    PretrainOptions po;
    po.steps = 150;
    po.seq_len = 32;
    po.seed = 3;
    pretrain(model, train_tokens, po);
    calib = capture_calibration(model, train_tokens, 24, 32, 9);
    factors = factorize_layers(model, calib);
  }

  TrainConfig config(double target) const {
    TrainConfig cfg;
    cfg.target_ratio = target;
    cfg.epochs = 2;
    cfg.samples = 24;
    cfg.seq_len = 32;
    cfg.lr = 0.05;
    cfg.seed = 4;
    return cfg;
  }
};

TinyRun& setup() {
  static TinyRun s;
  return s;
}

TEST(Training, DeterministicForFixedSeed) {
  TinyRun& s = setup();
  const TrainRun a = train(s.model, s.calib, s.factors, s.config(0.6));
  const TrainRun b = train(s.model, s.calib, s.factors, s.config(0.6));
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_EQ(a.steps[i].total, b.steps[i].total);
    EXPECT_EQ(a.steps[i].layer_ratio, b.steps[i].layer_ratio);
  }
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    EXPECT_EQ(a.layers[i].rank, b.layers[i].rank);
    EXPECT_EQ(a.layers[i].mask_alpha, b.layers[i].mask_alpha);
  }
}

TEST(Training, BackboneStaysFrozen) {
  TinyRun& s = setup();
  const std::string before = serialize_model(s.model);
  train(s.model, s.calib, s.factors, s.config(0.6));
  EXPECT_EQ(serialize_model(s.model), before);
}

TEST(Training, LossDecomposesIntoTerms) {
  TinyRun& s = setup();
  const TrainConfig cfg = s.config(0.6);
  const TrainRun run = train(s.model, s.calib, s.factors, cfg);
  ASSERT_EQ(run.steps.size(), cfg.epochs * s.calib.windows.size());
  for (const StepRecord& r : run.steps) {
    EXPECT_NEAR(r.total,
                r.model_loss + cfg.lambda1 * r.guidance_mean + cfg.lambda2 * r.constraint, 1e-10);
    EXPECT_NEAR(r.constraint, std::pow(r.expected_ratio - cfg.target_ratio, 2), 1e-12);
  }
}

TEST(Training, StrongConstraintMeetsTarget) {
  TinyRun& s = setup();
  TrainConfig cfg = s.config(0.6);
  cfg.lambda1 = 0.0;
  cfg.lambda2 = 1e4;
  cfg.epochs = 4;
  const TrainRun run = train(s.model, s.calib, s.factors, cfg);
  double expected = 0.0;
  for (const auto& l : run.layers) expected += l.trained_ratio * static_cast<double>(l.m * l.n);
  EXPECT_NEAR(expected / static_cast<double>(run.dense_total), 0.6, 0.006);
}

TEST(Training, AllocationRecountAndRescaleBound) {
  TinyRun& s = setup();
  const TrainRun run = train(s.model, s.calib, s.factors, s.config(0.6));
  std::size_t recount = 0, slack = 0;
  for (const auto& l : run.layers) {
    recount += l.mode == LayerMode::kDense ? l.m * l.n : l.rank * (l.m + l.n);
    slack += l.m + l.n;
    EXPECT_EQ(l.mask_p.size(), l.capacity);
    EXPECT_EQ(l.mask_steps, std::min<std::size_t>(100, l.capacity));
  }
  EXPECT_EQ(recount, run.total_parameters);
  EXPECT_LE(run.realized_ratio, 0.6 + 1e-12);
  EXPECT_GE(run.realized_ratio, 0.6 - static_cast<double>(slack) / run.dense_total);
  EXPECT_FALSE(run.notes.empty());  // D clamped to the layer size

  CompressibleModel compressed = materialize(s.model, s.factors, run.layers);
  EXPECT_EQ(compressed.compressible_parameter_count(), run.total_parameters);
  EXPECT_EQ(deserialize_model(serialize_model(compressed)).compressible_parameter_count(),
            run.total_parameters);
}

TEST(Training, FullTargetIsLossless) {
  TinyRun& s = setup();
  const TrainRun run = train(s.model, s.calib, s.factors, s.config(1.0));
  EXPECT_EQ(run.dense_layer_count(), run.layers.size());
  CompressibleModel out = materialize(s.model, s.factors, run.layers);
  EXPECT_EQ(serialize_model(out), serialize_model(s.model));
  EXPECT_NEAR(evaluate_ce(out, s.heldout, 32).ce, evaluate_ce(s.model, s.heldout, 32).ce, 1e-6);
}

TEST(Materialize, FullRankLayerIsLossless) {
  TinyRun& s = setup();
  TrainRun run;
  std::vector<LayerMode> modes(s.model.layers.size(), LayerMode::kLowRank);
  std::vector<std::size_t> ranks;
  for (const auto& l : s.model.layers) ranks.push_back(std::min(l.out_dim, l.in_dim));
  fill_allocation(run, s.model, s.factors, modes, ranks);
  for (const auto& l : run.layers) EXPECT_NEAR(l.capacity_preserved, 1.0, 1e-12);
  CompressibleModel out = materialize(s.model, s.factors, run.layers);
  Rng rng(2);
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    const Matrix x = Matrix::random_normal(5, out.layers[i].in_dim, rng);
    const Matrix dense = matmul_nt(x, s.model.layers[i].weight.value);
    const Matrix low = matmul_nt(matmul_nt(x, out.layers[i].right), out.layers[i].left);
    EXPECT_LE((dense - low).frobenius_norm(), 1e-6 * dense.frobenius_norm());
  }
  EXPECT_NEAR(evaluate_ce(out, s.heldout, 32).ce, evaluate_ce(s.model, s.heldout, 32).ce, 1e-6);
}

TEST(Factorize, RejectsMismatchedInputs) {
  TinyRun& s = setup();
  CalibrationSet partial = s.calib;
  partial.grams.pop_back();
  EXPECT_THROW(factorize_layers(s.model, partial), InputError);
  CompressibleModel copy = s.model.clone();
  copy.layers[0].mode = LayerMode::kLowRank;
  EXPECT_THROW(factorize_layers(copy, s.calib), InputError);
}

}  // namespace
}  // namespace ara
