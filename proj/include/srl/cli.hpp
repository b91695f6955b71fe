/*
 * Copyright 2026 The srltrace Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace srl::cli {

inline constexpr std::string_view kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kInternal = 1, kMissingInput = 2, kValidation = 3 };

// Runs one `srltrace` invocation. `args` includes the program name. Errors are
// reported on `err` and mapped to an exit code; nothing is thrown.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace srl::cli
