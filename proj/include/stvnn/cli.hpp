#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stvnn {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitOutputConflict = 3,
  kExitCorrupt = 4,
  kExitNumerical = 5,
};

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stvnn
