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

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "ara/cli.hpp"
#include "ara/corpus.hpp"
#include "ara/error.hpp"
#include "ara/model_io.hpp"

namespace {

using ara::cli::RunConfig;

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return "--" + f;
}

// Registers --config plus one flag per config key. Values are collected as
// strings and applied after the config file, so flags win.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value config file");
    for (const auto& key : ara::cli::config_keys()) {
      app->add_option(flag_name(key), values[key], "override '" + key + "'");
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig cfg;
    if (!config_path.empty()) ara::cli::apply_config_file(cfg, config_path);
    for (const auto& [key, value] : values) {
      if (app->count(flag_name(key)) > 0) ara::cli::set_config_value(cfg, key, value);
    }
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive rank allocation for low-rank compression of linear layers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ara::cli::version_string());

  ConfigFlags pretrain_flags, compress_flags, evaluate_flags;
  CLI::App* pretrain = app.add_subcommand("pretrain", "Train a dense byte-level model");
  pretrain_flags.attach(pretrain);
  CLI::App* compress = app.add_subcommand("compress", "Allocate ranks and compress a model");
  compress_flags.attach(compress);
  CLI::App* evaluate = app.add_subcommand("evaluate", "Held-out cross-entropy of a model file");
  evaluate_flags.attach(evaluate);

  std::string run_dir, report_out;
  CLI::App* report = app.add_subcommand("report", "Per-layer ratio table of a compress run");
  report->add_option("--run-dir", run_dir, "directory written by compress")->required();
  report->add_option("--out", report_out, "CSV path (default <run-dir>/report.csv)");

  std::string synth_out;
  std::size_t synth_bytes = 1 << 20;
  std::uint64_t synth_seed = 0;
  CLI::App* synth = app.add_subcommand("synth-corpus", "Write a synthetic English-like corpus");
  synth->add_option("--out", synth_out, "output text file")->required();
  synth->add_option("--bytes", synth_bytes, "corpus size in bytes");
  synth->add_option("--seed", synth_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ara::cli::kConfigError;
  }

  try {
    if (*pretrain) {
      ara::cli::run_pretrain(pretrain_flags.resolve(pretrain), std::cout);
    } else if (*compress) {
      const auto s = ara::cli::run_compress(compress_flags.resolve(compress), std::cout);
      std::cout << "wrote " << s.model_path << ", " << s.allocation_path << ", " << s.steps_path
                << ", " << s.manifest_path << "\n";
    } else if (*evaluate) {
      ara::cli::run_evaluate(evaluate_flags.resolve(evaluate), std::cout);
    } else if (*report) {
      const std::string path = ara::cli::run_report(run_dir, report_out, std::cout);
      std::cerr << "wrote " << path << "\n";
    } else if (*synth) {
      ara::write_file_atomic(synth_out, ara::synthesize_corpus(synth_bytes, synth_seed));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ara::cli::exit_code_for(e);
  }
  return ara::cli::kOk;
}
