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
#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

#include "ara/allocator.hpp"
#include "ara/baselines.hpp"
#include "ara/model.hpp"

// Pipeline commands behind the `ara` tool. Each run_* function does the
// work and writes human-readable progress to `log`; the tool maps thrown
// exceptions onto exit codes.
namespace ara::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kIoError = 3,
  kNumericalError = 4,
  kInternalError = 70,
};

int exit_code_for(const std::exception& e);

// Every setting of a run. The flat key=value config file, the command-line
// flags and the manifest all use the keys listed by config_keys().
struct RunConfig {
  std::uint64_t seed = 0;
  std::string corpus;
  std::string model_in;
  std::string model_out;
  std::string out_dir;
  double heldout_fraction = 0.1;

  std::size_t width = 64;
  std::size_t hidden = 128;
  std::size_t depth = 3;
  std::size_t context = 4;
  double init_std = 0.02;
  std::size_t pretrain_steps = 1500;
  std::size_t pretrain_batch = 8;
  double pretrain_lr = 3e-3;
  double pretrain_weight_decay = 0.0;

  std::string method = "ara";
  TrainConfig train;
  BaselineOptions baseline;
  std::size_t eval_windows = 0;  // 0 = every held-out window

  // Throws ConfigError naming the field.
  void validate() const;
  TrainConfig train_config() const;  // `train` with the run seed applied
};

const std::vector<std::string>& config_keys();
// Throws ConfigError for unknown keys and unparsable values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// Lines are `key = value`; blank lines and lines starting with '#' are
// skipped. `origin` prefixes error messages.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
void apply_config_file(RunConfig& cfg, const std::string& path);

struct ManifestInfo {
  std::string command;
  std::string created;  // UTC timestamp
  std::vector<std::pair<std::string, std::string>> outputs;
  std::vector<std::pair<std::string, std::string>> inputs;  // path → checksum
};

// A config file reproducing the run, preceded by commented metadata.
std::string manifest_text(const RunConfig& cfg, const ManifestInfo& info);
std::string version_string();

std::string allocation_json(const TrainRun& run, double target_ratio);
std::string step_log_csv(const TrainRun& run, const std::vector<std::string>& layer_names);
// Per-layer table: index, name, R, mode, G_R. Values are copied from the
// allocation JSON text.
std::string report_csv(const std::string& allocation_json_text);

struct PretrainSummary {
  double heldout_ce = 0.0;
  double uniform_ce = 0.0;  // ln(vocab)
  std::size_t parameters = 0;
};
PretrainSummary run_pretrain(const RunConfig& cfg, std::ostream& log);

struct CompressSummary {
  TrainRun run;
  std::string model_path;
  std::string allocation_path;
  std::string steps_path;
  std::string manifest_path;
};
CompressSummary run_compress(const RunConfig& cfg, std::ostream& log);

struct EvaluateSummary {
  double ce = 0.0;
  double perplexity = 0.0;
  std::size_t tokens = 0;
  std::size_t total_parameters = 0;        // every tensor in the file
  std::size_t compressible_dense = 0;      // C_t
  std::size_t compressible_realized = 0;   // stored compressible parameters
  double realized_ratio = 0.0;
};
EvaluateSummary run_evaluate(const RunConfig& cfg, std::ostream& log);

// Reads <run_dir>/allocation.json and writes the per-layer table to
// `out_path` (default <run_dir>/report.csv). Missing artifacts are listed
// in the IoError message.
std::string run_report(const std::string& run_dir, const std::string& out_path,
                       std::ostream& log);

}  // namespace ara::cli
