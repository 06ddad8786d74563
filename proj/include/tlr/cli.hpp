#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tlr::cli {

enum ExitCode : int { kSuccess = 0, kValidationError = 1, kRuntimeError = 2 };

/// Runs the `tlr` command line with `args` (program name excluded).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tlr::cli
