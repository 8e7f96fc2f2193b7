#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace finecount {

struct CommandResult {
  int exit_code = 0;  // 0 ok, 1 usage, 2 data, 3 numeric
  std::vector<std::filesystem::path> artifacts;
};

/// Parses `args` (without the program name) and runs one subcommand:
/// gen-synth, make-gt, train, eval, predict, visualize or stats.
/// Normal output goes to `out`, diagnostics to `err`.
CommandResult run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace finecount
