#pragma once

#include <string>
#include <vector>

namespace stepuq::cli {

enum ExitCode : int { kOk = 0, kUsageError = 1, kDataError = 2, kTransportError = 3 };

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs the command-line tool in-process. `args[0]` is the program name.
int run(const std::vector<std::string>& args);

}  // namespace stepuq::cli
