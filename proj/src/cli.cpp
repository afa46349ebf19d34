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

#include "ara/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "ara/corpus.hpp"
#include "ara/error.hpp"
#include "ara/model_io.hpp"
#include "json.hpp"

#ifndef ARA_VERSION
#define ARA_VERSION "0.1.0"
#endif

namespace ara::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e)) {
    return kConfigError;
  }
  if (dynamic_cast<const IoError*>(&e)) return kIoError;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumericalError;
  return kInternalError;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw ConfigError("config field '" + key + "': cannot parse '" + value + "' as " + expected);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    bad_value(key, v, "a non-negative integer");
  }
  return out;
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  bad_value(key, v, "on or off");
}

struct KeySpec {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Ordered so that manifests list related settings together.
const std::vector<std::pair<std::string, KeySpec>>& key_table() {
  static const auto* table = [] {
    auto* t = new std::vector<std::pair<std::string, KeySpec>>;
    auto text = [&](const std::string& key, std::string RunConfig::*field) {
      t->emplace_back(key, KeySpec{[field](RunConfig& c, const std::string& v) { c.*field = v; },
                                   [field](const RunConfig& c) { return c.*field; }});
    };
    auto real = [&](const std::string& key, std::function<double&(RunConfig&)> field) {
      t->emplace_back(key, KeySpec{[key, field](RunConfig& c, const std::string& v) {
                                     field(c) = parse_double(key, v);
                                   },
                                   [field](const RunConfig& c) {
                                     return format_double(field(const_cast<RunConfig&>(c)));
                                   }});
    };
    auto count = [&](const std::string& key, std::function<std::size_t&(RunConfig&)> field) {
      t->emplace_back(key, KeySpec{[key, field](RunConfig& c, const std::string& v) {
                                     field(c) = static_cast<std::size_t>(parse_u64(key, v));
                                   },
                                   [field](const RunConfig& c) {
                                     return std::to_string(field(const_cast<RunConfig&>(c)));
                                   }});
    };
    auto flag = [&](const std::string& key, std::function<bool&(RunConfig&)> field) {
      t->emplace_back(key, KeySpec{[key, field](RunConfig& c, const std::string& v) {
                                     field(c) = parse_flag(key, v);
                                   },
                                   [field](const RunConfig& c) {
                                     return std::string(field(const_cast<RunConfig&>(c)) ? "on"
                                                                                         : "off");
                                   }});
    };

    t->emplace_back("seed", KeySpec{[](RunConfig& c, const std::string& v) {
                                      c.seed = parse_u64("seed", v);
                                    },
                                    [](const RunConfig& c) { return std::to_string(c.seed); }});
    text("method", &RunConfig::method);
    text("corpus", &RunConfig::corpus);
    text("model_in", &RunConfig::model_in);
    text("model_out", &RunConfig::model_out);
    text("out_dir", &RunConfig::out_dir);
    real("heldout_fraction", [](RunConfig& c) -> double& { return c.heldout_fraction; });

    count("width", [](RunConfig& c) -> std::size_t& { return c.width; });
    count("hidden", [](RunConfig& c) -> std::size_t& { return c.hidden; });
    count("depth", [](RunConfig& c) -> std::size_t& { return c.depth; });
    count("context", [](RunConfig& c) -> std::size_t& { return c.context; });
    real("init_std", [](RunConfig& c) -> double& { return c.init_std; });
    count("pretrain_steps", [](RunConfig& c) -> std::size_t& { return c.pretrain_steps; });
    count("pretrain_batch", [](RunConfig& c) -> std::size_t& { return c.pretrain_batch; });
    real("pretrain_lr", [](RunConfig& c) -> double& { return c.pretrain_lr; });
    real("pretrain_weight_decay",
         [](RunConfig& c) -> double& { return c.pretrain_weight_decay; });

    real("ratio", [](RunConfig& c) -> double& { return c.train.target_ratio; });
    real("lambda1", [](RunConfig& c) -> double& { return c.train.lambda1; });
    real("lambda2", [](RunConfig& c) -> double& { return c.train.lambda2; });
    count("D", [](RunConfig& c) -> std::size_t& { return c.train.mask_steps; });
    real("lr", [](RunConfig& c) -> double& { return c.train.lr; });
    real("weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
    count("epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
    count("samples", [](RunConfig& c) -> std::size_t& { return c.train.samples; });
    count("seq_len", [](RunConfig& c) -> std::size_t& { return c.train.seq_len; });
    count("batch", [](RunConfig& c) -> std::size_t& { return c.train.batch_windows; });
    flag("clamp_guidance", [](RunConfig& c) -> bool& { return c.train.clamp_guidance; });
    flag("dense_switch", [](RunConfig& c) -> bool& { return c.train.dense_switch; });
    real("clip_norm", [](RunConfig& c) -> double& { return c.train.clip_norm; });
    real("damping", [](RunConfig& c) -> double& { return c.train.damping; });

    real("tanh_beta", [](RunConfig& c) -> double& { return c.baseline.tanh_beta; });
    real("tanh_lr", [](RunConfig& c) -> double& { return c.baseline.tanh_lr; });
    real("gumbel_temperature",
         [](RunConfig& c) -> double& { return c.baseline.gumbel_temperature; });
    t->emplace_back("gumbel_lr",
                    KeySpec{[](RunConfig& c, const std::string& v) {
                              if (v.empty()) {
                                c.baseline.gumbel_lr.reset();
                              } else {
                                c.baseline.gumbel_lr = parse_double("gumbel_lr", v);
                              }
                            },
                            [](const RunConfig& c) {
                              return c.baseline.gumbel_lr ? format_double(*c.baseline.gumbel_lr)
                                                          : std::string();
                            }});
    count("eval_windows", [](RunConfig& c) -> std::size_t& { return c.eval_windows; });
    return t;
  }();
  return *table;
}

const KeySpec& find_key(const std::string& key) {
  for (const auto& [name, spec] : key_table()) {
    if (name == key) return spec;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string checksum_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

void require_path(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError("config field '" + key + "': required for this command");
}

ModelConfig model_config(const RunConfig& cfg, std::size_t vocab) {
  ModelConfig mc;
  mc.vocab = vocab;
  mc.width = cfg.width;
  mc.hidden = cfg.hidden;
  mc.depth = cfg.depth;
  mc.context = cfg.context;
  mc.init_std = cfg.init_std;
  mc.seed = cfg.seed;
  return mc;
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("config field '" + key + "': " + why);
  };
  if (method != "ara") parse_baseline_kind(method);
  train.validate();
  if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
    fail("heldout_fraction", "must lie in (0, 1)");
  }
  if (width == 0) fail("width", "must be positive");
  if (hidden == 0) fail("hidden", "must be positive");
  if (depth == 0) fail("depth", "must be positive");
  if (context == 0) fail("context", "must be positive");
  if (!(init_std > 0.0)) fail("init_std", "must be positive");
  if (pretrain_batch == 0) fail("pretrain_batch", "must be positive");
  if (!(pretrain_lr > 0.0)) fail("pretrain_lr", "must be positive");
  if (!(pretrain_weight_decay >= 0.0)) fail("pretrain_weight_decay", "must be non-negative");
  if (!(baseline.tanh_beta > 0.0)) fail("tanh_beta", "must be positive");
  if (!(baseline.tanh_lr > 0.0)) fail("tanh_lr", "must be positive");
  if (!(baseline.gumbel_temperature > 0.0)) fail("gumbel_temperature", "must be positive");
  if (baseline.gumbel_lr && !(*baseline.gumbel_lr > 0.0)) fail("gumbel_lr", "must be positive");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, spec] : key_table()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  return find_key(key).get(cfg);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  apply_config_text(cfg, read_text_file(path), path);
}

std::string version_string() { return ARA_VERSION; }

std::string manifest_text(const RunConfig& cfg, const ManifestInfo& info) {
  std::ostringstream os;
  os << "# ara run manifest\n";
  os << "# version: " << version_string() << "\n";
  os << "# command: " << info.command << "\n";
  os << "# created: " << info.created << "\n";
  for (const auto& [path, sum] : info.inputs) os << "# input: " << path << " fnv1a64=" << sum << "\n";
  for (const auto& [what, path] : info.outputs) os << "# output: " << what << " " << path << "\n";
  for (const auto& key : config_keys()) os << key << " = " << get_config_value(cfg, key) << "\n";
  return os.str();
}

std::string allocation_json(const TrainRun& run, double target_ratio) {
  json j;
  j["method"] = run.method;
  j["target_ratio"] = target_ratio;
  j["realized_ratio"] = run.realized_ratio;
  j["scale_factor"] = run.scale_factor;
  j["total_parameters"] = run.total_parameters;
  j["dense_total"] = run.dense_total;
  j["dense_layers"] = run.dense_layer_count();
  j["notes"] = run.notes;
  json layers = json::array();
  for (std::size_t i = 0; i < run.layers.size(); ++i) {
    const LayerAllocation& l = run.layers[i];
    json e;
    e["index"] = i;
    e["name"] = l.name;
    e["m"] = l.m;
    e["n"] = l.n;
    e["mode"] = std::string(to_string(l.mode));
    e["rank"] = l.rank;
    e["R"] = l.ratio;
    e["G_R"] = l.capacity_preserved;
    e["parameters"] = l.parameters;
    e["trained_R"] = l.trained_ratio;
    e["scaled_R"] = l.scaled_ratio;
    e["mask_steps"] = l.mask_steps;
    if (!l.mask_alpha.empty()) e["alpha"] = l.mask_alpha;
    if (!l.mask_p.empty()) e["p"] = l.mask_p;
    layers.push_back(std::move(e));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

std::string step_log_csv(const TrainRun& run, const std::vector<std::string>& layer_names) {
  std::ostringstream os;
  os << "step,L_m,L_g,L_c,total,realized_ratio,expected_ratio";
  for (const auto& n : layer_names) os << "," << n << ".R," << n << ".G_R";
  os << "\n";
  for (const StepRecord& s : run.steps) {
    os << s.step << "," << format_double(s.model_loss) << "," << format_double(s.guidance_mean)
       << "," << format_double(s.constraint) << "," << format_double(s.total) << ","
       << format_double(s.realized_ratio) << "," << format_double(s.expected_ratio);
    for (std::size_t i = 0; i < s.layer_ratio.size(); ++i) {
      os << "," << format_double(s.layer_ratio[i]) << "," << format_double(s.layer_capacity[i]);
    }
    os << "\n";
  }
  return os.str();
}

std::string report_csv(const std::string& allocation_json_text) {
  json j;
  try {
    j = json::parse(allocation_json_text);
  } catch (const json::exception& e) {
    throw IoError(std::string("allocation JSON: ") + e.what());
  }
  std::ostringstream os;
  os << "layer_index,module,R,mode,G_R\n";
  try {
    for (const auto& l : j.at("layers")) {
      os << l.at("index").dump() << "," << l.at("name").get<std::string>() << ","
         << l.at("R").dump() << "," << l.at("mode").get<std::string>() << ","
         << l.at("G_R").dump() << "\n";
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("allocation JSON: ") + e.what());
  }
  return os.str();
}

PretrainSummary run_pretrain(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  require_path(cfg.corpus, "corpus");
  require_path(cfg.model_out, "model_out");
  const std::string text = read_text_file(cfg.corpus);
  Tokenizer tok = Tokenizer::from_text(text);
  const Corpus corpus = split_corpus(tok.encode(text), cfg.heldout_fraction);
  CompressibleModel model = build_model(model_config(cfg, tok.vocab_size()), tok);

  PretrainOptions opt;
  opt.steps = cfg.pretrain_steps;
  opt.batch_windows = cfg.pretrain_batch;
  opt.seq_len = cfg.train.seq_len;
  opt.lr = cfg.pretrain_lr;
  opt.weight_decay = cfg.pretrain_weight_decay;
  opt.seed = cfg.seed;
  log << "pretraining " << model.parameter_count() << " parameters for " << opt.steps
      << " steps\n";
  const PretrainReport report = pretrain(model, corpus.train, opt);

  PretrainSummary s;
  s.heldout_ce = evaluate_ce(model, corpus.heldout, cfg.train.seq_len, cfg.eval_windows).ce;
  s.uniform_ce = std::log(static_cast<double>(tok.vocab_size()));
  s.parameters = model.parameter_count();
  save_model(model, cfg.model_out);

  ManifestInfo info{"pretrain", utc_now(), {{"model", cfg.model_out}},
                    {{cfg.corpus, checksum_hex(text)}}};
  write_file_atomic(cfg.model_out + ".manifest", manifest_text(cfg, info));
  log << "final train loss " << (report.losses.empty() ? 0.0 : report.losses.back())
      << ", held-out CE " << s.heldout_ce << " (uniform " << s.uniform_ce << ")\n";
  return s;
}

CompressSummary run_compress(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  require_path(cfg.model_in, "model_in");
  require_path(cfg.corpus, "corpus");
  require_path(cfg.out_dir, "out_dir");
  const std::string model_bytes = read_text_file(cfg.model_in);
  CompressibleModel model = deserialize_model(model_bytes);
  const std::string text = read_text_file(cfg.corpus);
  const Corpus corpus = split_corpus(model.tokenizer.encode(text), cfg.heldout_fraction);
  const TrainConfig train_cfg = cfg.train_config();

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create '" + cfg.out_dir + "': " + ec.message());

  CompressSummary s;
  s.model_path = cfg.model_out.empty() ? (fs::path(cfg.out_dir) / "model.ara").string()
                                       : cfg.model_out;
  s.allocation_path = (fs::path(cfg.out_dir) / "allocation.json").string();
  s.steps_path = (fs::path(cfg.out_dir) / "steps.csv").string();
  s.manifest_path = (fs::path(cfg.out_dir) / "manifest.cfg").string();

  log << "calibrating on " << train_cfg.samples << " windows of " << train_cfg.seq_len
      << " tokens\n";
  const CalibrationSet calib =
      capture_calibration(model, corpus.train, train_cfg.samples, train_cfg.seq_len, cfg.seed);
  const std::vector<WhitenedFactorization> factors =
      factorize_layers(model, calib, train_cfg.damping);

  log << "allocating with method " << cfg.method << " at ratio "
      << format_double(train_cfg.target_ratio) << "\n";
  s.run = cfg.method == "ara" ? train(model, calib, factors, train_cfg)
                              : run_baseline(parse_baseline_kind(cfg.method), model, calib,
                                             factors, train_cfg, cfg.baseline);
  const CompressibleModel compressed = materialize(model, factors, s.run.layers);

  std::vector<std::string> names;
  for (const auto& l : model.layers) names.push_back(l.name);
  save_model(compressed, s.model_path);
  write_file_atomic(s.allocation_path, allocation_json(s.run, train_cfg.target_ratio));
  write_file_atomic(s.steps_path, step_log_csv(s.run, names));
  ManifestInfo info{"compress",
                    utc_now(),
                    {{"model", s.model_path},
                     {"allocation", s.allocation_path},
                     {"steps", s.steps_path}},
                    {{cfg.model_in, checksum_hex(model_bytes)}, {cfg.corpus, checksum_hex(text)}}};
  write_file_atomic(s.manifest_path, manifest_text(cfg, info));

  log << "realized ratio " << format_double(s.run.realized_ratio) << " ("
      << s.run.total_parameters << " / " << s.run.dense_total << "), "
      << s.run.dense_layer_count() << " dense layers, scale " << format_double(s.run.scale_factor)
      << "\n";
  for (const auto& note : s.run.notes) log << "note: " << note << "\n";
  return s;
}

EvaluateSummary run_evaluate(const RunConfig& cfg, std::ostream& log) {
  require_path(cfg.model_in, "model_in");
  require_path(cfg.corpus, "corpus");
  if (!(cfg.heldout_fraction > 0.0 && cfg.heldout_fraction < 1.0)) {
    throw ConfigError("config field 'heldout_fraction': must lie in (0, 1)");
  }
  if (cfg.train.seq_len == 0) throw ConfigError("config field 'seq_len': must be positive");
  CompressibleModel model = load_model(cfg.model_in);
  const std::string text = read_text_file(cfg.corpus);
  const Corpus corpus = split_corpus(model.tokenizer.encode(text), cfg.heldout_fraction);
  const EvalResult r = evaluate_ce(model, corpus.heldout, cfg.train.seq_len, cfg.eval_windows);

  EvaluateSummary s;
  s.ce = r.ce;
  s.perplexity = r.perplexity;
  s.tokens = r.tokens;
  s.total_parameters = model.parameter_count();
  s.compressible_dense = model.compressible_dense_count();
  s.compressible_realized = model.compressible_parameter_count();
  s.realized_ratio =
      static_cast<double>(s.compressible_realized) / static_cast<double>(s.compressible_dense);
  log << "ce " << format_double(s.ce) << "\n"
      << "perplexity " << format_double(s.perplexity) << "\n"
      << "tokens " << s.tokens << "\n"
      << "parameters " << s.total_parameters << "\n"
      << "compressible_dense " << s.compressible_dense << "\n"
      << "compressible_realized " << s.compressible_realized << "\n"
      << "realized_ratio " << format_double(s.realized_ratio) << "\n";
  return s;
}

std::string run_report(const std::string& run_dir, const std::string& out_path,
                       std::ostream& log) {
  const fs::path alloc = fs::path(run_dir) / "allocation.json";
  std::vector<std::string> missing;
  if (!fs::is_directory(run_dir)) missing.push_back(run_dir + " (run directory)");
  else if (!fs::is_regular_file(alloc)) missing.push_back(alloc.string());
  if (!missing.empty()) {
    std::string msg = "missing run artifacts:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw IoError(msg);
  }
  const std::string csv = report_csv(read_text_file(alloc.string()));
  const std::string target =
      out_path.empty() ? (fs::path(run_dir) / "report.csv").string() : out_path;
  write_file_atomic(target, csv);
  log << csv;
  return target;
}

}  // namespace ara::cli
