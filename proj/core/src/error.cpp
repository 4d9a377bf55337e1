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

#include "stackprop/error.hpp"

namespace stackprop {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kIntegrity: return "integrity error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kSize: return "size error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kPipeline: return "pipeline error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message), kind_(kind) {}

void Throw(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace stackprop
