#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace polylab::cli {

enum ExitCode : int { ok = 0, runtime_failure = 1, usage_error = 2 };

/// Runs the command line `args` (without the program name), writing to the given streams.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace polylab::cli
