// Copyright 2026 The Stackprop Authors
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

#ifndef STACKPROP_ERROR_HPP_
#define STACKPROP_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace stackprop {

enum class ErrorKind {
  kConfig,     // invalid hyperparameters or configuration
  kShape,      // dimension mismatch between operands
  kData,       // non-finite or otherwise unusable values
  kParse,      // malformed input file
  kIntegrity,  // cross-file id inconsistencies
  kIo,         // file could not be opened or written
  kSize,       // problem too large for the requested routine
  kNumeric,    // factorization or solver failure
  kPipeline,   // failure inside a training pipeline stage
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void Throw(ErrorKind kind, const std::string& message);

inline void Require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) Throw(kind, message);
}

}  // namespace stackprop

#endif  // STACKPROP_ERROR_HPP_
