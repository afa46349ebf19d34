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

#include "ara/model_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "ara/error.hpp"
#include "json.hpp"

namespace ara {
namespace {

using nlohmann::json;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

void put_tensor(std::string& out, const Matrix& m) {
  for (double x : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

struct TensorEntry {
  std::string name;
  const Matrix* matrix;
};

std::vector<TensorEntry> tensor_list(const CompressibleModel& model) {
  std::vector<TensorEntry> list;
  for (const auto& e : model.embeddings) list.push_back({e.name(), &e.value});
  for (const auto& l : model.layers) {
    if (l.mode == LayerMode::kDense) {
      list.push_back({l.name + ".weight", &l.weight.value});
    } else {
      list.push_back({l.name + ".left", &l.left});
      list.push_back({l.name + ".right", &l.right});
    }
  }
  list.push_back({model.head.name(), &model.head.value});
  return list;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string serialize_model(const CompressibleModel& model) {
  json header;
  const ModelConfig& c = model.config;
  header["config"] = {{"vocab", c.vocab},     {"width", c.width},       {"hidden", c.hidden},
                      {"depth", c.depth},     {"context", c.context},   {"init_std", c.init_std},
                      {"seed", c.seed}};
  header["alphabet"] = model.tokenizer.alphabet();
  json layers = json::array();
  for (const auto& l : model.layers) {
    layers.push_back({{"name", l.name},
                      {"out", l.out_dim},
                      {"in", l.in_dim},
                      {"mode", std::string(to_string(l.mode))},
                      {"rank", l.rank()}});
  }
  header["layers"] = layers;
  const auto tensors = tensor_list(model);
  json tensor_meta = json::array();
  for (const auto& t : tensors)
    tensor_meta.push_back({{"name", t.name}, {"rows", t.matrix->rows()}, {"cols", t.matrix->cols()}});
  header["tensors"] = tensor_meta;

  const std::string header_text = header.dump();
  std::string out(kModelMagic, sizeof(kModelMagic));
  put_u32(out, kModelFormatVersion);
  put_u64(out, header_text.size());
  out += header_text;
  for (const auto& t : tensors) put_tensor(out, *t.matrix);
  put_u64(out, fnv1a64(out));
  return out;
}

CompressibleModel deserialize_model(std::string_view bytes) {
  constexpr std::size_t kPrefix = sizeof(kModelMagic) + 4 + 8;
  if (bytes.size() < kPrefix + 8 || std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
    throw IoError("model file: bad magic");
  }
  const std::uint64_t stored = get_le(bytes, bytes.size() - 8, 8);
  if (stored != fnv1a64(bytes.substr(0, bytes.size() - 8))) {
    throw IoError("model file: checksum mismatch");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, sizeof(kModelMagic), 4));
  if (version != kModelFormatVersion) {
    throw IoError("model file: unsupported version " + std::to_string(version));
  }
  const std::uint64_t header_len = get_le(bytes, sizeof(kModelMagic) + 4, 8);
  if (kPrefix + header_len + 8 > bytes.size()) throw IoError("model file: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(kPrefix, header_len));
  } catch (const json::exception& e) {
    throw IoError(std::string("model file: bad header: ") + e.what());
  }

  std::size_t offset = kPrefix + header_len;
  const std::size_t payload_end = bytes.size() - 8;
  std::map<std::string, Matrix> tensors;
  for (const auto& t : header.at("tensors")) {
    const std::size_t rows = t.at("rows"), cols = t.at("cols");
    if (offset + rows * cols * 8 > payload_end) throw IoError("model file: truncated tensor data");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i, offset += 8)
      m[i] = std::bit_cast<double>(get_le(bytes, offset, 8));
    tensors.emplace(t.at("name").get<std::string>(), std::move(m));
  }
  if (offset != payload_end) throw IoError("model file: trailing bytes after tensors");

  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("model file: missing tensor '" + name + "'");
    return std::move(it->second);
  };

  CompressibleModel model;
  const json& cfg = header.at("config");
  model.config.vocab = cfg.at("vocab");
  model.config.width = cfg.at("width");
  model.config.hidden = cfg.at("hidden");
  model.config.depth = cfg.at("depth");
  model.config.context = cfg.at("context");
  model.config.init_std = cfg.at("init_std");
  model.config.seed = cfg.at("seed");
  model.tokenizer = Tokenizer(header.at("alphabet").get<std::vector<std::uint8_t>>());
  for (std::size_t k = 0; k < model.config.context; ++k) {
    const std::string name = "embed." + std::to_string(k);
    model.embeddings.emplace_back(name, take(name));
  }
  for (const auto& l : header.at("layers")) {
    LinearLayer layer;
    layer.name = l.at("name");
    layer.out_dim = l.at("out");
    layer.in_dim = l.at("in");
    if (l.at("mode") == "dense") {
      layer.mode = LayerMode::kDense;
      layer.weight = ad::Parameter(layer.name, take(layer.name + ".weight"));
    } else {
      layer.mode = LayerMode::kLowRank;
      layer.left = take(layer.name + ".left");
      layer.right = take(layer.name + ".right");
    }
    model.layers.push_back(std::move(layer));
  }
  model.head = ad::Parameter("head", take("head"));
  return model;
}

void save_model(const CompressibleModel& model, const std::string& path) {
  write_file_atomic(path, serialize_model(model));
}

CompressibleModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

void write_file_atomic(const std::string& path, std::string_view contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace ara
