#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tesda::cli {

enum ExitCode : int { ok = 0, usage = 1, data_error = 2, numerical_error = 3 };

/// Runs the tesda command line. Results go to `out`, key=value progress and
/// error lines to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tesda::cli
