#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace dermpipe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitUsage = 64;

// Runs one `dermpipe <subcommand> ...` invocation. `args` excludes the
// program name. Logs go to `err`; `out` only receives --json summaries.
int run_subcommand(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr);

}  // namespace dermpipe
