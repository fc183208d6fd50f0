#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fixloc {

inline constexpr const char* kToolVersion = "1.0.0";

/// Runs one subcommand. `args[0]` is the program name. Returns 0 on success,
/// 1 on a domain error and 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fixloc
