#pragma once

#include <iosfwd>

namespace cqed {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitInput = 2, kExitNumerical = 3 };

/// Parses argv (argv[0] is the program name) and runs one subcommand. Results go
/// to `out` unless --out names a file; diagnostics and usage go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace cqed
