// Copyright 2026 The morphfit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "morphfit/error.hpp"

namespace morphfit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  // gradcheck failure, rerun mismatch
inline constexpr int kExitUsage = 2;        // bad arguments, invalid or mismatched inputs
inline constexpr int kExitIo = 3;           // missing, unreadable or malformed files
inline constexpr int kExitNumeric = 4;      // non-finite values during computation

int exit_code(ErrorKind kind);

// Runs one command. args excludes the program name. The one-line JSON
// summary goes to out, diagnostics and usage to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace morphfit::cli
