#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ssmnd {

/// Runs one command line (without the program name). Returns 0 on success,
/// 2 on usage errors and 1 on configuration or runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ssmnd
