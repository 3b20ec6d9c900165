#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stpd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `stpd` tool. `args[0]` is the program name. Returns 0 on
/// success, 1 on usage or configuration errors, 2 on runtime errors.
int run(std::vector<std::string> const &args, std::ostream &out, std::ostream &err);

} // namespace stpd::cli
