#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace smered {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  /// An input file is missing or unreadable.
  kExitInput = 2,
  /// An input file is malformed (bad header, empty cell, corrupt sample file).
  kExitFormat = 3,
  /// Bad flags, config file or parameter values.
  kExitUsage = 4,
};

/// Run the tool with argv-style arguments (args[0] is the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Matplotlib script that renders a heatmap TSV written by the tool.
extern const char* const kHeatmapScript;

}  // namespace smered
