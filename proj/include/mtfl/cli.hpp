// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mtfl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs one invocation. `args` excludes the program name. Subcommands:
// train, score, eval, synth, gradcheck. Each accepts --config <file> whose
// keys mirror the long flag names; explicit flags win over the file.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtfl::cli
