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

#include "ara/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ara/error.hpp"
#include "ara/factorization.hpp"
#include "ara/rng.hpp"

namespace ara {

std::size_t LinearLayer::parameter_count() const {
  return mode == LayerMode::kDense ? out_dim * in_dim : left.size() + right.size();
}

Matrix LinearLayer::effective_matrix() const {
  if (mode == LayerMode::kDense) return weight.value;
  if (left.cols() == 0) return Matrix(out_dim, in_dim);
  return matmul(left, right);
}

Batch make_batch(std::span<const int> tokens, std::span<const std::size_t> starts,
                 std::size_t seq_len) {
  Batch b;
  b.seq_len = seq_len;
  b.inputs.reserve(starts.size() * seq_len);
  b.targets.reserve(starts.size() * seq_len);
  for (std::size_t s : starts) {
    if (s + seq_len + 1 > tokens.size()) throw InputError("make_batch: window out of bounds");
    b.inputs.insert(b.inputs.end(), tokens.begin() + s, tokens.begin() + s + seq_len);
    b.targets.insert(b.targets.end(), tokens.begin() + s + 1, tokens.begin() + s + seq_len + 1);
  }
  return b;
}

Batch make_batch(std::span<const std::vector<int>> windows, std::span<const std::size_t> picks) {
  Batch b;
  for (std::size_t i : picks) {
    const auto& w = windows[i];
    if (w.size() < 2) throw InputError("make_batch: window shorter than two tokens");
    if (b.seq_len == 0) b.seq_len = w.size() - 1;
    if (w.size() != b.seq_len + 1) throw InputError("make_batch: windows differ in length");
    b.inputs.insert(b.inputs.end(), w.begin(), w.end() - 1);
    b.targets.insert(b.targets.end(), w.begin() + 1, w.end());
  }
  return b;
}

ad::Var CompressibleModel::forward(ad::Graph& g, const Batch& batch,
                                   const ForwardOptions& options) {
  const bool train = options.train_backbone;
  const std::size_t tokens = batch.inputs.size();
  const std::size_t seq = std::max<std::size_t>(batch.seq_len, 1);

  ad::Var x;
  std::vector<int> shifted(tokens);
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    for (std::size_t i = 0; i < tokens; ++i) {
      shifted[i] = (i % seq) >= k ? batch.inputs[i - k] : -1;
    }
    ad::Var e = ad::embedding(g.param(embeddings[k], train), shifted);
    x = x.valid() ? ad::add(x, e) : e;
  }

  auto linear = [&](std::size_t index, ad::Var input) -> ad::Var {
    if (options.capture != nullptr) (*options.capture)(index, input.value());
    if (options.linear != nullptr) return (*options.linear)(index, input);
    LinearLayer& layer = layers[index];
    if (layer.mode == LayerMode::kDense) {
      return ad::matmul_nt(input, g.param(layer.weight, train));
    }
    ad::Var inner = ad::matmul_nt(input, g.constant(layer.right));
    return ad::matmul_nt(inner, g.constant(layer.left));
  };

  const std::size_t blocks = layers.size() / kLayersPerBlock;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t base = b * kLayersPerBlock;
    ad::Var u = ad::rms_norm_rows(x);
    ad::Var gate = ad::silu(linear(base, u));
    ad::Var up = linear(base + 1, u);
    ad::Var down = linear(base + 2, ad::hadamard(gate, up));
    x = ad::add(x, down);
  }
  return ad::matmul_nt(ad::rms_norm_rows(x), g.param(head, train));
}

std::vector<ad::Parameter*> CompressibleModel::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& e : embeddings) out.push_back(&e);
  for (auto& l : layers)
    if (l.mode == LayerMode::kDense) out.push_back(&l.weight);
  out.push_back(&head);
  return out;
}

CompressibleModel CompressibleModel::clone() const {
  CompressibleModel c;
  c.config = config;
  c.tokenizer = tokenizer;
  c.embeddings = embeddings;
  c.layers = layers;
  c.head = head;
  return c;
}

std::size_t CompressibleModel::parameter_count() const {
  std::size_t n = head.value.size();
  for (const auto& e : embeddings) n += e.value.size();
  return n + compressible_parameter_count();
}

std::size_t CompressibleModel::compressible_parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

std::size_t CompressibleModel::compressible_dense_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.dense_parameter_count();
  return n;
}

CompressibleModel build_model(const ModelConfig& config, Tokenizer tokenizer) {
  if (config.vocab == 0 || config.width == 0 || config.hidden == 0 || config.depth == 0 ||
      config.context == 0) {
    throw InputError("build_model: dimensions must be positive");
  }
  if (tokenizer.vocab_size() != config.vocab) {
    throw InputError("build_model: tokenizer vocab " + std::to_string(tokenizer.vocab_size()) +
                     " != configured vocab " + std::to_string(config.vocab));
  }
  Rng rng(config.seed);
  CompressibleModel model;
  model.config = config;
  model.tokenizer = std::move(tokenizer);
  for (std::size_t k = 0; k < config.context; ++k) {
    model.embeddings.emplace_back("embed." + std::to_string(k),
                                  Matrix::random_normal(config.vocab, config.width, rng, 0.5));
  }
  auto make_layer = [&](std::string name, std::size_t out, std::size_t in, double stddev) {
    LinearLayer l;
    l.name = name;
    l.out_dim = out;
    l.in_dim = in;
    l.weight = ad::Parameter(std::move(name), Matrix::random_normal(out, in, rng, stddev));
    return l;
  };
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.depth));
  for (std::size_t b = 0; b < config.depth; ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    model.layers.push_back(make_layer(prefix + "gate", config.hidden, config.width, config.init_std));
    model.layers.push_back(make_layer(prefix + "up", config.hidden, config.width, config.init_std));
    model.layers.push_back(make_layer(prefix + "down", config.width, config.hidden,
                                      residual_scale * config.init_std));
  }
  model.head = ad::Parameter("head", Matrix::random_normal(config.vocab, config.width, rng,
                                                           config.init_std));
  return model;
}

std::size_t closed_form_parameter_count(const ModelConfig& c) {
  return c.context * c.vocab * c.width + c.depth * kLayersPerBlock * c.hidden * c.width +
         c.vocab * c.width;
}

PretrainReport pretrain(CompressibleModel& model, std::span<const int> tokens,
                        const PretrainOptions& options) {
  const auto starts = window_starts(tokens.size(), options.seq_len);
  if (starts.empty()) throw InputError("pretrain: corpus shorter than one window");
  Rng rng(options.seed);
  ad::AdamWOptions adam;
  adam.lr = options.lr;
  adam.weight_decay = options.weight_decay;
  ad::AdamW opt(model.parameters(), adam);
  PretrainReport report;
  const std::size_t warmup = std::min<std::size_t>(100, options.steps / 10 + 1);
  for (std::size_t step = 0; step < options.steps; ++step) {
    // Linear warmup then cosine decay to a tenth of the peak rate.
    double lr = options.lr;
    if (step < warmup) {
      lr *= static_cast<double>(step + 1) / static_cast<double>(warmup);
    } else {
      const double t = static_cast<double>(step - warmup) /
                       static_cast<double>(std::max<std::size_t>(1, options.steps - warmup));
      lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    }
    opt.set_lr(lr);
    std::vector<std::size_t> picked(options.batch_windows);
    for (auto& s : picked) s = starts[rng.below(starts.size())];
    const Batch batch = make_batch(tokens, picked, options.seq_len);
    ad::Graph g;
    ad::Var loss = ad::cross_entropy(model.forward(g, batch, {.train_backbone = true}), batch.targets);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw NumericalError("pretrain: loss diverged at step " + std::to_string(step) +
                           "; try a smaller learning rate than " + std::to_string(options.lr));
    }
    report.losses.push_back(value);
    g.backward(loss);
    opt.step();
  }
  return report;
}

EvalResult evaluate_ce(CompressibleModel& model, std::span<const int> tokens,
                       std::size_t seq_len, std::size_t max_windows) {
  auto starts = window_starts(tokens.size(), seq_len);
  if (starts.empty()) throw InputError("evaluate_ce: held-out split shorter than one window");
  if (max_windows > 0 && starts.size() > max_windows) starts.resize(max_windows);
  constexpr std::size_t kChunk = 16;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < starts.size(); i += kChunk) {
    const std::size_t end = std::min(starts.size(), i + kChunk);
    const Batch batch =
        make_batch(tokens, std::span<const std::size_t>(starts).subspan(i, end - i), seq_len);
    ad::Graph g;
    ad::Var ce = ad::cross_entropy(model.forward(g, batch), batch.targets);
    total += ce.value().item() * static_cast<double>(batch.targets.size());
    count += batch.targets.size();
  }
  EvalResult r;
  r.tokens = count;
  r.ce = total / static_cast<double>(count);
  r.perplexity = std::exp(r.ce);
  return r;
}

CalibrationSet capture_calibration(CompressibleModel& model, std::span<const int> tokens,
                                   std::size_t samples, std::size_t seq_len, std::uint64_t seed,
                                   bool keep_activations) {
  auto starts = window_starts(tokens.size(), seq_len);
  if (starts.empty()) throw InputError("capture_calibration: corpus shorter than one window");
  Rng rng(seed);
  rng.shuffle(starts);
  if (samples < starts.size()) starts.resize(samples);

  CalibrationSet cal;
  cal.seq_len = seq_len;
  cal.starts = starts;
  for (std::size_t s : starts)
    cal.windows.emplace_back(tokens.begin() + s, tokens.begin() + s + seq_len + 1);
  for (const auto& l : model.layers) cal.grams.emplace_back(l.in_dim, l.in_dim);
  if (keep_activations) cal.activations.resize(model.layers.size());
  std::vector<std::vector<Matrix>> pieces(keep_activations ? model.layers.size() : 0);

  CompressibleModel::CaptureHook capture = [&](std::size_t index, const Matrix& input) {
    cal.grams[index] += gram_from_token_rows(input);
    if (keep_activations) pieces[index].push_back(input.transpose());
  };
  for (std::size_t s : starts) {
    const std::size_t one[] = {s};
    const Batch batch = make_batch(tokens, one, seq_len);
    ad::Graph g;
    model.forward(g, batch, {.capture = &capture});
    cal.token_count += batch.inputs.size();
  }
  if (keep_activations) {
    for (std::size_t l = 0; l < pieces.size(); ++l) {
      Matrix x(model.layers[l].in_dim, cal.token_count);
      std::size_t col = 0;
      for (const Matrix& p : pieces[l]) {
        for (std::size_t r = 0; r < p.rows(); ++r)
          for (std::size_t c = 0; c < p.cols(); ++c) x(r, col + c) = p(r, c);
        col += p.cols();
      }
      cal.activations[l] = std::move(x);
    }
  }
  return cal;
}

}  // namespace ara
