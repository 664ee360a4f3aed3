#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace wsr::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // runtime, I/O or format error; failed checks
inline constexpr int kUsage = 2;    // bad flags

// Runs one `wsr` invocation. args excludes the program name, e.g.
// {"gen", "--out", "data", "--per-cell", "50"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wsr::cli
