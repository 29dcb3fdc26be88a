#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vqatom::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitInvariant = 3;

// Runs the command line (argv[0] is the program name). Results go to out,
// progress and diagnostics to err. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// One line per check; false when any check failed.
bool selfcheck(std::ostream& out);

// VQATOM_THREADS when set (>= 1), otherwise the hardware concurrency.
unsigned worker_count();

}  // namespace vqatom::cli
