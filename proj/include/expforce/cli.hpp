#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace expforce {

/// Entry point of the `expforce` tool. `args` excludes the program name.
/// Returns 0 on success, 1 on runtime failure, 2 on usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace expforce
