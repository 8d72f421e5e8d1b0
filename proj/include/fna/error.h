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

#include <stdexcept>
#include <string>

namespace fna {

enum class ErrorCode {
  kDimension = 1,
  kConfig,
  kNumerical,
  kParse,
  kIo,
  kChecksum,
  kVersion,
  kValidation,
  kUsage,
};

const char* error_code_name(ErrorCode code);

// Base of every error thrown by the library. The C API maps `code()` onto
// its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define FNA_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

FNA_DEFINE_ERROR(DimensionError, kDimension)
FNA_DEFINE_ERROR(ConfigError, kConfig)
FNA_DEFINE_ERROR(NumericalError, kNumerical)
FNA_DEFINE_ERROR(ParseError, kParse)
FNA_DEFINE_ERROR(IoError, kIo)
FNA_DEFINE_ERROR(ChecksumError, kChecksum)
FNA_DEFINE_ERROR(VersionError, kVersion)
FNA_DEFINE_ERROR(ValidationError, kValidation)
FNA_DEFINE_ERROR(UsageError, kUsage)

#undef FNA_DEFINE_ERROR

}  // namespace fna
