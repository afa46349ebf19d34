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

#include <algorithm>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "ara/cli.hpp"
#include "ara/corpus.hpp"
#include "ara/error.hpp"
#include "ara/model_io.hpp"
#include "json.hpp"

namespace ara::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

TEST(Config, DefaultsRoundTripThroughEveryKey) {
  RunConfig a;
  RunConfig b;
  b.seed = 99;
  b.train.lambda1 = 3.5;
  for (const auto& key : config_keys()) set_config_value(b, key, get_config_value(a, key));
  for (const auto& key : config_keys()) EXPECT_EQ(get_config_value(b, key), get_config_value(a, key));
  EXPECT_EQ(b.seed, 0u);
}

TEST(Config, ParsesFileText) {
  RunConfig c;
  apply_config_text(c,
                    "# comment\n\nratio = 0.6\nlambda1=0\nD = 16\nclamp_guidance = off\n"
                    "method = tanh\n  seq_len = 32  \n",
                    "test.cfg");
  EXPECT_DOUBLE_EQ(c.train.target_ratio, 0.6);
  EXPECT_DOUBLE_EQ(c.train.lambda1, 0.0);
  EXPECT_EQ(c.train.mask_steps, 16u);
  EXPECT_FALSE(c.train.clamp_guidance);
  EXPECT_EQ(c.method, "tanh");
  EXPECT_EQ(c.train.seq_len, 32u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ErrorsCarryOriginAndLine) {
  RunConfig c;
  auto message = [&](const std::string& text) {
    try {
      apply_config_text(c, text, "run.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("ratio = 0.5\nbogus = 1\n").find("run.cfg:2"), std::string::npos);
  EXPECT_NE(message("ratio = 0.5\nbogus = 1\n").find("bogus"), std::string::npos);
  EXPECT_NE(message("epochs = ten\n").find("epochs"), std::string::npos);
  EXPECT_NE(message("no equals sign\n").find("run.cfg:1"), std::string::npos);
  EXPECT_FALSE(message("ratio = inf\n").empty());
  EXPECT_FALSE(message("clamp_guidance = maybe\n").empty());
  EXPECT_FALSE(message("seed = -4\n").empty());
}

TEST(Config, ValidationRejectsBadFields) {
  RunConfig c;
  c.method = "magic";
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.train.target_ratio = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.heldout_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.baseline.tanh_beta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(apply_config_file(c, "/nonexistent/run.cfg"), IoError);
}

TEST(ExitCodes, MapErrorKinds) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kConfigError);
  EXPECT_EQ(exit_code_for(InputError("x")), kConfigError);
  EXPECT_EQ(exit_code_for(IoError("x")), kIoError);
  EXPECT_EQ(exit_code_for(NumericalError("x")), kNumericalError);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kInternalError);
  EXPECT_NE(kIoError, kNumericalError);
}

TEST(Report, CsvCopiesJsonValues) {
  TrainRun run;
  run.method = "ara";
  run.dense_total = 100;
  LayerAllocation a;
  a.name = "block0.gate";
  a.m = a.n = 10;
  a.mode = LayerMode::kDense;
  a.rank = 10;
  a.ratio = 1.0;
  a.capacity_preserved = 1.0;
  a.parameters = 100;
  LayerAllocation b = a;
  b.name = "block0.up";
  b.mode = LayerMode::kLowRank;
  b.rank = 2;
  b.ratio = 0.4;
  b.capacity_preserved = 0.123456789012345;
  b.parameters = 40;
  run.layers = {a, b};
  run.total_parameters = 140;
  const std::string csv = report_csv(allocation_json(run, 0.7));
  EXPECT_EQ(csv,
            "layer_index,module,R,mode,G_R\n"
            "0,block0.gate,1.0,dense,1.0\n"
            "1,block0.up,0.4,low-rank,0.123456789012345\n");
  EXPECT_THROW(report_csv("{not json"), IoError);
  EXPECT_THROW(report_csv("{\"layers\": [{\"index\": 0}]}"), IoError);
}

// A tiny pretrained model shared by the pipeline tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / ("ara_cli_test_" + std::to_string(::getpid())));
    fs::remove_all(*dir_);
    fs::create_directories(*dir_);
    write_file_atomic((*dir_ / "corpus.txt").string(), synthesize_corpus(60000, 21));
    RunConfig c = base();
    c.model_out = (*dir_ / "dense.ara").string();
    std::ostringstream log;
    run_pretrain(c, log);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }

  static RunConfig base() {
    RunConfig c;
    c.seed = 13;
    c.corpus = (*dir_ / "corpus.txt").string();
    c.model_in = (*dir_ / "dense.ara").string();
    c.width = 12;
    c.hidden = 24;
    c.depth = 2;
    c.pretrain_steps = 60;
    c.pretrain_batch = 4;
    c.train.seq_len = 24;
    c.train.samples = 10;
    c.train.epochs = 2;
    return c;
  }

  static fs::path dir(const std::string& name) { return *dir_ / name; }

  static CompressSummary compress(RunConfig c, const std::string& out) {
    c.out_dir = dir(out).string();
    std::ostringstream log;
    return run_compress(c, log);
  }

  static EvaluateSummary evaluate(const std::string& model_path) {
    RunConfig c = base();
    c.model_in = model_path;
    std::ostringstream log;
    return run_evaluate(c, log);
  }

  static fs::path* dir_;
};

fs::path* Pipeline::dir_ = nullptr;

TEST_F(Pipeline, PretrainWritesModelAndManifest) {
  EXPECT_TRUE(fs::exists(dir("dense.ara")));
  const std::string manifest = slurp(dir("dense.ara.manifest"));
  EXPECT_NE(manifest.find("# command: pretrain"), std::string::npos);
  EXPECT_NE(manifest.find("fnv1a64="), std::string::npos);
  EXPECT_NE(manifest.find("seed = 13"), std::string::npos);
  RunConfig back;
  apply_config_text(back, manifest, "manifest");
  for (const auto& key : config_keys()) {
    if (key != "model_out") EXPECT_EQ(get_config_value(back, key), get_config_value(base(), key));
  }
}

TEST_F(Pipeline, UniformAllocationMatchesClosedForm) {
  RunConfig c = base();
  c.method = "uniform";
  c.train.target_ratio = 0.8;
  const CompressSummary s = compress(c, "uniform");
  const auto j = nlohmann::json::parse(slurp(s.allocation_path));
  EXPECT_EQ(j.at("method"), "uniform");
  for (const auto& l : j.at("layers")) {
    const double m = l.at("m"), n = l.at("n");
    EXPECT_EQ(l.at("rank").get<std::size_t>(), static_cast<std::size_t>(std::floor(0.8 * m * n / (m + n))));
    EXPECT_EQ(l.at("mode"), "low-rank");
  }
  EXPECT_EQ(line_count(slurp(s.steps_path)), 1u);  // header only
}

TEST_F(Pipeline, SameManifestReproducesArtifactsByteForByte) {
  RunConfig c = base();
  c.train.target_ratio = 0.6;
  const CompressSummary first = compress(c, "ara_a");
  RunConfig replay;
  apply_config_file(replay, first.manifest_path);
  replay.model_out.clear();
  const CompressSummary second = compress(replay, "ara_b");
  EXPECT_EQ(slurp(first.allocation_path), slurp(second.allocation_path));
  EXPECT_EQ(slurp(first.steps_path), slurp(second.steps_path));
  EXPECT_EQ(slurp(first.model_path), slurp(second.model_path));
  EXPECT_EQ(line_count(slurp(first.steps_path)), 1 + 2 * c.train.samples);
}

TEST_F(Pipeline, EvaluateRecountsParameters) {
  RunConfig c = base();
  c.train.target_ratio = 0.6;
  const CompressSummary s = compress(c, "recount");
  const EvaluateSummary e = evaluate(s.model_path);
  EXPECT_EQ(e.compressible_realized, s.run.total_parameters);
  EXPECT_EQ(e.compressible_dense, s.run.dense_total);
  EXPECT_DOUBLE_EQ(e.realized_ratio, s.run.realized_ratio);
  EXPECT_LE(e.realized_ratio, 0.6 + 1e-12);
  EXPECT_NEAR(e.perplexity, std::exp(e.ce), 1e-9);
}

TEST_F(Pipeline, FullRatioIsLosslessAndReportsDense) {
  RunConfig c = base();
  c.train.target_ratio = 1.0;
  const CompressSummary s = compress(c, "full");
  EXPECT_EQ(slurp(s.model_path), slurp(dir("dense.ara")));
  EXPECT_NEAR(evaluate(s.model_path).ce, evaluate(dir("dense.ara").string()).ce, 1e-6);

  std::ostringstream log;
  const std::string path = run_report(dir("full").string(), "", log);
  const std::string csv = slurp(path);
  EXPECT_EQ(line_count(csv), 1 + s.run.layers.size());
  std::istringstream rows(csv);
  std::string row;
  std::getline(rows, row);
  while (std::getline(rows, row)) {
    EXPECT_NE(row.find(",1.0,dense,1.0"), std::string::npos) << row;
  }
}

TEST_F(Pipeline, ReportMatchesAllocation) {
  RunConfig c = base();
  c.train.target_ratio = 0.6;
  const CompressSummary s = compress(c, "report");
  std::ostringstream log;
  const std::string out = dir("report_copy.csv").string();
  EXPECT_EQ(run_report(dir("report").string(), out, log), out);
  const std::string csv = slurp(out);
  const auto j = nlohmann::json::parse(slurp(s.allocation_path));
  std::istringstream rows(csv);
  std::string row;
  std::getline(rows, row);
  for (const auto& l : j.at("layers")) {
    ASSERT_TRUE(std::getline(rows, row));
    std::istringstream fields(row);
    std::string index, name, ratio, mode, capacity;
    std::getline(fields, index, ',');
    std::getline(fields, name, ',');
    std::getline(fields, ratio, ',');
    std::getline(fields, mode, ',');
    std::getline(fields, capacity, ',');
    EXPECT_EQ(name, l.at("name").get<std::string>());
    EXPECT_EQ(std::stod(ratio), l.at("R").get<double>());
    EXPECT_EQ(mode, l.at("mode").get<std::string>());
    EXPECT_EQ(std::stod(capacity), l.at("G_R").get<double>());
  }
  EXPECT_FALSE(std::getline(rows, row));
}

TEST_F(Pipeline, MissingArtifactsAreListed) {
  std::ostringstream log;
  fs::create_directories(dir("empty_run"));
  try {
    run_report(dir("empty_run").string(), "", log);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("allocation.json"), std::string::npos);
  }
  EXPECT_THROW(run_report(dir("no_such_run").string(), "", log), IoError);
  RunConfig c = base();
  c.model_in = dir("missing.ara").string();
  EXPECT_THROW(compress(c, "x"), IoError);
  c = base();
  c.corpus.clear();
  EXPECT_THROW(compress(c, "x"), ConfigError);
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(ARA_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(Pipeline, ToolExitCodes) {
  const std::string corpus = base().corpus;
  const std::string model = base().model_in;
  EXPECT_EQ(run_tool("evaluate --model-in " + model + " --corpus " + corpus +
                     " --seq-len 24 --eval-windows 2"),
            kOk);
  EXPECT_EQ(run_tool("evaluate --model-in " + dir("missing.ara").string() + " --corpus " + corpus),
            kIoError);
  EXPECT_EQ(run_tool("compress --model-in " + model + " --corpus " + corpus + " --out-dir " +
                     dir("bad").string() + " --ratio 2"),
            kConfigError);
  EXPECT_EQ(run_tool("compress --lambda1 abc"), kConfigError);
  EXPECT_EQ(run_tool("frobnicate"), kConfigError);
  EXPECT_EQ(run_tool("report --run-dir " + dir("nothing_here").string()), kIoError);

  std::ofstream(dir("bad.cfg")) << "ratio = 0.5\nwidth = -3\n";
  EXPECT_EQ(run_tool("pretrain --config " + dir("bad.cfg").string()), kConfigError);
}

TEST_F(Pipeline, ToolFlagsOverrideConfigFile) {
  std::ofstream(dir("run.cfg")) << "seed = 13\nmethod = uniform\nratio = 0.5\nseq_len = 24\n"
                                << "samples = 10\nwidth = 12\n";
  ASSERT_EQ(run_tool("compress --config " + dir("run.cfg").string() + " --ratio 0.7 --model-in " +
                     base().model_in + " --corpus " + base().corpus + " --out-dir " +
                     dir("override").string()),
            kOk);
  const auto j = nlohmann::json::parse(slurp(dir("override") / "allocation.json"));
  EXPECT_DOUBLE_EQ(j.at("target_ratio").get<double>(), 0.7);
  EXPECT_NE(slurp(dir("override") / "manifest.cfg").find("ratio = 0.7\n"), std::string::npos);
}

}  // namespace
}  // namespace ara::cli
