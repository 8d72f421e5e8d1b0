// Copyright 2026 The fna Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "fna/training.h"

namespace fna {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Container layout, little-endian:
//   "FNACKPT\0" | u32 version | u64 header length | JSON header |
//   f32 payload (parameters, then Adam m, then Adam v) | u64 FNV-1a of all
//   preceding bytes.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
// VersionError / ChecksumError / ParseError are raised before anything is
// returned.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 14695981039346656037ull);

// 16 hex digits hashing the configuration and every parameter value.
std::string model_id(const FocalNet<float>& model);

}  // namespace fna
