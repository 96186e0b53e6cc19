#pragma once

// pdelearn command line: generate, corrupt, train, report.
//
// Exit codes: 0 success, 2 invalid arguments or configuration, 3 numerical
// failure, 4 empty PDE.

#include <iosfwd>
#include <string>
#include <vector>

namespace pdelearn {

enum ExitCode : int { kExitOk = 0, kExitInvalid = 2, kExitNumerical = 3, kExitEmptyPde = 4 };

/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pdelearn
