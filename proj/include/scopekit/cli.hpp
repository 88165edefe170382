#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scopekit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Runs the tool with `args` (program name first). Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace scopekit::cli
