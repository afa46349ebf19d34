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

#include <string>
#include <string_view>

#include "ara/model.hpp"

namespace ara {

inline constexpr char kModelMagic[8] = {'A', 'R', 'A', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

// Byte layout (all integers little-endian):
//   magic "ARAMODEL" | u32 version | u64 header length | header JSON |
//   tensors as little-endian f64, row-major, in header order |
//   u64 FNV-1a checksum of every preceding byte.
std::string serialize_model(const CompressibleModel& model);
// Throws IoError on bad magic, version, truncation or checksum mismatch.
CompressibleModel deserialize_model(std::string_view bytes);

void save_model(const CompressibleModel& model, const std::string& path);
CompressibleModel load_model(const std::string& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace ara
