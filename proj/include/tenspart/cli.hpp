#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tenspart {

enum ExitCode : int {
    exit_ok = 0,
    exit_validation = 2,
    exit_not_converged = 3,
    exit_io = 4,
};

/// Runs the command-line driver on `args` (program name excluded) and returns the exit code.
/// Messages go to `out` and `err`; artifacts are written under the --out directory.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tenspart
