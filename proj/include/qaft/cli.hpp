#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qaft {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;      // bad input, schema error, missing or mismatched artifacts
inline constexpr int kExitNumerical = 3;  // sampling or other numerical failure

// The qaft command line. args[0] is the program name. Returns the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qaft
