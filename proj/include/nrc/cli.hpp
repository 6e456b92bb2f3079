#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nrc {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Runs one subcommand (gen-data, pretrain, adapt, eval, diagnose). args[0]
/// is the program name. Errors go to `err` as a single line starting with
/// "error_code=N".
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nrc
