#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace advad {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitVerificationFailed = 1,
  kExitUsage = 2,
  kExitRuntime = 3,
};

/// Entry point of the `advad` tool: train, attack, verify, bench, compare,
/// export. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace advad
