// Copyright 2026 The EDTK Authors.
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

// Command-line entry point. Subcommands: corpus, train, generate, sweep,
// perplexity, swap-selfattn, frob-diff, serve.

#ifndef EDTK_CLI_HPP
#define EDTK_CLI_HPP

#include <ostream>

namespace edtk {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Returns 0 on success, 1 with a one-line diagnostic on a runtime failure
/// and 2 with usage text on bad arguments or missing files.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace edtk

#endif  // EDTK_CLI_HPP
