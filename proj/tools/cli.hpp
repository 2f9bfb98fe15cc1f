#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scfnet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

// Parses argv (argv[0] included) and runs the chosen subcommand.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scfnet::cli
