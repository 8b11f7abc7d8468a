#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the `cap` tool. `args` includes the program name. Values
// from `--config FILE` (flat `key = value` lines named like the long flags)
// fill in flags not given explicitly; environment variables beat the file.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cap::cli
