#pragma once

#include <string>
#include <vector>

namespace heracles::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kDataError = 3,
    kVerificationFailure = 4,
    kInternal = 5,
};

/// Runs the command line `args` (args[0] is the program name) in-process and
/// returns the process exit code.
int run(const std::vector<std::string>& args);

}  // namespace heracles::cli
