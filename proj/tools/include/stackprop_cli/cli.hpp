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

#ifndef STACKPROP_CLI_CLI_HPP_
#define STACKPROP_CLI_CLI_HPP_

#include <iosfwd>

namespace stackprop {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;     // bad arguments or configuration
inline constexpr int kExitData = 2;      // unreadable, malformed or inconsistent input
inline constexpr int kExitPipeline = 3;  // training or numerical failure

int CliMain(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stackprop

#endif  // STACKPROP_CLI_CLI_HPP_
