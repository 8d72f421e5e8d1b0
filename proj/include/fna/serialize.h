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

#include <json.hpp>

#include "fna/audio.h"
#include "fna/focalnet.h"
#include "fna/training.h"

// JSON forms of the configuration structs. Field names mirror the struct
// members. Missing keys keep their defaults; unknown keys raise ParseError.
namespace fna {

using Json = nlohmann::ordered_json;

Json to_json(const FocalNetConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const StftParams& c);
Json to_json(const PreprocessConfig& c);

// Overlay `j` onto `c`.
void merge_json(FocalNetConfig& c, const Json& j);
void merge_json(TrainConfig& c, const Json& j);
void merge_json(StftParams& c, const Json& j);
void merge_json(PreprocessConfig& c, const Json& j);

}  // namespace fna
