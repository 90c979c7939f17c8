#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gmml::cli {

inline constexpr const char* kToolVersion = "1.0.0";

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
enum ExitCode : int { kSuccess = 0, kFailure = 1, kUsage = 2 };

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmml::cli
