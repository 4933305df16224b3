#pragma once

#include <string>
#include <vector>

namespace suplid::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitInternal = 2;

// Parses and runs one subcommand. args[0] is the program name. Diagnostics go
// to stderr; the return value is the process exit code.
int run(const std::vector<std::string>& args);

}  // namespace suplid::cli
