#pragma once

#include <iosfwd>

namespace srda {

// Exit codes of the srda command.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitNumerical = 3 };

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace srda
