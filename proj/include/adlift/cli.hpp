#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adlift::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// Runs one `adlift` invocation. `args` excludes the program name. Results go
// to files or `out`; diagnostics go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Closest known subcommand to `name` by edit distance, or "" when none is near.
std::string suggest_subcommand(const std::string& name);

}  // namespace adlift::cli
