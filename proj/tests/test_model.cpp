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

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>

#include "ara/corpus.hpp"
#include "ara/error.hpp"
#include "ara/factorization.hpp"
#include "ara/model.hpp"
#include "ara/model_io.hpp"
#include "test_support.hpp"

namespace ara {
namespace {

struct Fixture {
  std::string text = synthesize_corpus(60000, 3);
  Tokenizer tokenizer = Tokenizer::from_text(text);
  std::vector<int> tokens = tokenizer.encode(text);

  ModelConfig config(std::size_t width = 16, std::size_t depth = 2, std::uint64_t seed = 1) const {
    ModelConfig c;
    c.vocab = tokenizer.vocab_size();
    c.width = width;
    c.hidden = 2 * width;
    c.depth = depth;
    c.seed = seed;
    return c;
  }
  CompressibleModel model(std::size_t width = 16, std::size_t depth = 2, std::uint64_t seed = 1) const {
    return build_model(config(width, depth, seed), tokenizer);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Tokenizer tokenizer_with_vocab(std::size_t vocab) {
  std::vector<std::uint8_t> alphabet;
  for (std::size_t i = 0; i + 1 < vocab; ++i) alphabet.push_back(static_cast<std::uint8_t>(32 + i));
  return Tokenizer(alphabet);
}

bool same_weights(const CompressibleModel& a, const CompressibleModel& b) {
  if (a.layers.size() != b.layers.size() || a.embeddings.size() != b.embeddings.size()) return false;
  for (std::size_t k = 0; k < a.embeddings.size(); ++k)
    if (!(a.embeddings[k].value == b.embeddings[k].value)) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const LinearLayer &x = a.layers[l], &y = b.layers[l];
    if (x.name != y.name || x.mode != y.mode || !(x.weight.value == y.weight.value) ||
        !(x.left == y.left) || !(x.right == y.right))
      return false;
  }
  return a.head.value == b.head.value;
}

TEST(Tokenizer, RoundTripAndUnknownBytes) {
  const Tokenizer t = Tokenizer::from_text("hello world");
  EXPECT_EQ(t.vocab_size(), 9u);  // 8 distinct bytes + unknown
  const std::vector<int> ids = t.encode("hello");
  EXPECT_EQ(t.decode(ids), "hello");
  EXPECT_EQ(t.encode("z")[0], 0);
  EXPECT_EQ(t.decode(std::vector<int>{0}), "?");
}

TEST(Corpus, SplitAndWindows) {
  const Corpus c = split_corpus(std::vector<int>(100, 1), 0.1);
  EXPECT_EQ(c.train.size(), 90u);
  EXPECT_EQ(c.heldout.size(), 10u);
  EXPECT_THROW(split_corpus({}, 0.1), InputError);
  const auto starts = window_starts(100, 9);
  EXPECT_EQ(starts, (std::vector<std::size_t>{0, 10, 20, 30, 40, 50, 60, 70, 80, 90}));
  EXPECT_TRUE(window_starts(5, 9).empty());
}

TEST(Corpus, SynthesisIsDeterministic) {
  EXPECT_EQ(synthesize_corpus(5000, 9), synthesize_corpus(5000, 9));
  EXPECT_NE(synthesize_corpus(5000, 9), synthesize_corpus(5000, 10));
  EXPECT_EQ(synthesize_corpus(1234, 1).size(), 1234u);
}

TEST(BuildModel, ParameterCountMatchesHandCount) {
  ModelConfig c;
  c.vocab = 96;
  c.width = 64;
  c.depth = 2;
  const CompressibleModel m = build_model(c, tokenizer_with_vocab(96));
  // 4 embedding tables 96×64, 2 blocks of three 128×64 maps, head 96×64.
  const std::size_t hand = 4 * 96 * 64 + 2 * 3 * 128 * 64 + 96 * 64;
  EXPECT_EQ(hand, 79872u);
  EXPECT_EQ(m.parameter_count(), hand);
  EXPECT_EQ(closed_form_parameter_count(c), hand);
  EXPECT_EQ(m.layers.size(), 6u);
  EXPECT_EQ(m.layers[0].name, "block0.gate");
  EXPECT_EQ(m.layers[2].out_dim, 64u);
  EXPECT_EQ(m.layers[2].in_dim, 128u);
}

TEST(BuildModel, SameSeedSameWeights) {
  const Fixture& f = fixture();
  EXPECT_TRUE(same_weights(f.model(16, 2, 7), f.model(16, 2, 7)));
  EXPECT_FALSE(same_weights(f.model(16, 2, 7), f.model(16, 2, 8)));
}

TEST(BuildModel, InvalidConfigurationThrows) {
  const Fixture& f = fixture();
  ModelConfig c = f.config();
  c.width = 0;
  EXPECT_THROW(build_model(c, f.tokenizer), InputError);
  c = f.config();
  c.vocab += 1;
  EXPECT_THROW(build_model(c, f.tokenizer), InputError);
}

TEST(Forward, ZeroTokensGivesEmptyLogits) {
  CompressibleModel m = fixture().model();
  ad::Graph g;
  Batch empty;
  empty.seq_len = 8;
  ad::Var logits = m.forward(g, empty);
  EXPECT_EQ(logits.rows(), 0u);
  EXPECT_EQ(logits.cols(), m.config.vocab);
}

TEST(Forward, DeterministicAndCaptureIsTransparent) {
  const Fixture& f = fixture();
  CompressibleModel m = f.model();
  const std::size_t starts[] = {0, 65};
  const Batch batch = make_batch(f.tokens, starts, 64);
  ad::Graph g1, g2, g3;
  const Matrix plain = m.forward(g1, batch).value();
  EXPECT_EQ(plain, m.forward(g2, batch).value());
  std::size_t calls = 0;
  CompressibleModel::CaptureHook capture = [&](std::size_t, const Matrix&) { ++calls; };
  EXPECT_EQ(plain, m.forward(g3, batch, {.capture = &capture}).value());
  EXPECT_EQ(calls, m.layers.size());
}

TEST(Forward, IdentityLinearHookIsTransparent) {
  const Fixture& f = fixture();
  CompressibleModel m = f.model();
  const std::size_t starts[] = {130};
  const Batch batch = make_batch(f.tokens, starts, 32);
  ad::Graph g1, g2;
  const Matrix plain = m.forward(g1, batch).value();
  CompressibleModel::LinearHook hook = [&](std::size_t i, ad::Var x) {
    return ad::matmul_nt(x, g2.constant(m.layers[i].weight.value));
  };
  EXPECT_EQ(plain, m.forward(g2, batch, {.linear = &hook}).value());
}

TEST(Batches, WindowsAreShiftedTargets) {
  const std::vector<int> tokens{1, 2, 3, 4, 5, 6, 7};
  const std::size_t starts[] = {0, 3};
  const Batch b = make_batch(tokens, starts, 3);
  EXPECT_EQ(b.inputs, (std::vector<int>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(b.targets, (std::vector<int>{2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(b.windows(), 2u);
  const std::size_t bad[] = {4};
  EXPECT_THROW(make_batch(tokens, bad, 3), InputError);
}

TEST(Evaluate, UniformLogitsGiveLogVocab) {
  const Fixture& f = fixture();
  CompressibleModel m = f.model();
  m.head.value.fill(0.0);
  const double ln_v = std::log(static_cast<double>(m.config.vocab));
  EXPECT_NEAR(evaluate_ce(m, f.tokens, 32, 20).ce, ln_v, 1e-12);
  CompressibleModel untrained = f.model();
  EXPECT_NEAR(evaluate_ce(untrained, f.tokens, 32, 20).ce, ln_v, 0.05 * ln_v);
  EXPECT_THROW(evaluate_ce(m, std::vector<int>(10, 1), 32), InputError);
}

TEST(Evaluate, CloneGivesIdenticalCe) {
  const Fixture& f = fixture();
  CompressibleModel m = f.model();
  CompressibleModel copy = m.clone();
  const EvalResult a = evaluate_ce(m, f.tokens, 32, 10), b = evaluate_ce(copy, f.tokens, 32, 10);
  EXPECT_NEAR(a.ce, b.ce, 1e-9);
  EXPECT_EQ(a.tokens, 320u);
  EXPECT_NEAR(a.perplexity, std::exp(a.ce), 1e-12);
}

TEST(Pretrain, LowersHeldOutLossBelowUniform) {
  const Fixture& f = fixture();
  const Corpus c = split_corpus(f.tokens, 0.1);
  CompressibleModel m = f.model(32, 1, 2);
  PretrainOptions opt;
  opt.steps = 300;
  opt.seq_len = 32;
  opt.seed = 2;
  const PretrainReport report = pretrain(m, c.train, opt);
  ASSERT_EQ(report.losses.size(), 300u);
  const double ln_v = std::log(static_cast<double>(m.config.vocab));
  EXPECT_LT(evaluate_ce(m, c.heldout, 32).ce, 0.9 * ln_v);
  EXPECT_THROW(pretrain(m, std::vector<int>(5, 1), opt), InputError);
}

TEST(Calibration, ShapesAndDeterminism) {
  const Fixture& f = fixture();
  CompressibleModel m = f.model();
  const CalibrationSet one = capture_calibration(m, f.tokens, 1, 40, 5, true);
  ASSERT_EQ(one.activations.size(), m.layers.size());
  EXPECT_EQ(one.activations[0].rows(), 16u);
  EXPECT_EQ(one.activations[0].cols(), 40u);
  EXPECT_EQ(one.activations[2].rows(), 32u);
  EXPECT_LT(max_abs_diff(gram(one.activations[1]), one.grams[1]), 1e-12);

  const CalibrationSet a = capture_calibration(m, f.tokens, 8, 40, 11, true);
  const CalibrationSet b = capture_calibration(m, f.tokens, 8, 40, 11, true);
  EXPECT_EQ(a.starts, b.starts);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    EXPECT_EQ(a.activations[l], b.activations[l]);
    EXPECT_EQ(a.grams[l], b.grams[l]);
  }
  EXPECT_NE(capture_calibration(m, f.tokens, 8, 40, 12).starts, a.starts);
  EXPECT_THROW(capture_calibration(m, std::vector<int>(30, 1), 1, 40, 1), InputError);
}

TEST(Calibration, WindowsDisjointInBoundsAndGramsPsd) {
  const Fixture& f = fixture();
  CompressibleModel m = f.model();
  const CalibrationSet cal = capture_calibration(m, f.tokens, 32, 64, 4);
  std::vector<std::size_t> starts = cal.starts;
  std::sort(starts.begin(), starts.end());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    EXPECT_LE(starts[i] + 65, f.tokens.size());
    if (i > 0) EXPECT_GE(starts[i], starts[i - 1] + 65);
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    EXPECT_GE(cal.token_count, m.layers[l].in_dim);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(testing::to_eigen(cal.grams[l]));
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(ModelIo, RoundTripIsBitIdentical) {
  const Fixture& f = fixture();
  CompressibleModel m = f.model();
  m.layers[1].mode = LayerMode::kLowRank;
  Rng rng(3);
  m.layers[1].left = Matrix::random_normal(32, 5, rng);
  m.layers[1].right = Matrix::random_normal(5, 16, rng);
  m.layers[1].weight = ad::Parameter(m.layers[1].name, Matrix());

  const std::string bytes = serialize_model(m);
  const CompressibleModel back = deserialize_model(bytes);
  EXPECT_TRUE(same_weights(m, back));
  EXPECT_EQ(serialize_model(back), bytes);
  EXPECT_EQ(back.config.init_std, m.config.init_std);
  EXPECT_EQ(back.tokenizer.alphabet(), m.tokenizer.alphabet());
  EXPECT_EQ(back.layers[1].rank(), 5u);

  const auto path = std::filesystem::temp_directory_path() / "ara_test_roundtrip.ara";
  save_model(m, path.string());
  const CompressibleModel loaded = load_model(path.string());
  EXPECT_TRUE(same_weights(m, loaded));
  std::filesystem::remove(path);
}

TEST(ModelIo, CorruptionIsDetected) {
  const std::string bytes = serialize_model(fixture().model());
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x10;
  EXPECT_THROW(deserialize_model(flipped), IoError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_model(magic), IoError);
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 100)), IoError);
  EXPECT_THROW(deserialize_model(""), IoError);
  EXPECT_THROW(load_model("/nonexistent/dir/model.ara"), IoError);
}

}  // namespace
}  // namespace ara
