#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace deepe {

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitInputError = 2,
  kExitCorrupt = 3,
};

// Entry point of the `deepe` tool. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepe
