#pragma once

#include <iosfwd>

namespace clusterscope {

// Entry point for the command-line tool. Returns the process exit code:
// 0 on success, 2 on invalid input or parameters, 1 otherwise.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace clusterscope
