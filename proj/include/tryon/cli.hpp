#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace tryon {

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitConfig = 2, kExitBackend = 3 };

/// Runs one `tryon` command line (argv[0] included). The resolved configuration is echoed
/// to `err` as one JSON line before the command runs; that line is itself a valid
/// `--config` file. Errors are reported on `err` as a JSON line.
int dispatch(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace tryon
