#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace randctl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (args[0] is the program name).
/// Returns 0 when everything passed, 1 on an invariant failure and 2 on a
/// usage or validation error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace randctl::cli
