#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace surrogate {

/// Runs one command-line invocation; `args` excludes the program name.
/// Returns 0 on success, 1 on usage or validation errors, 2 on runtime failures.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace surrogate
