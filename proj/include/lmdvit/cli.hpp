#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lmdvit {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

/// Runs one command line (args[0] is the program name). Subcommands:
/// gen-data, train, infer, eval, flops. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lmdvit
