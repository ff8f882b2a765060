#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace roa::cli {

enum ExitCode { kOk = 0, kCheckFailed = 1, kUsage = 2 };

// Runs one command line (args[0] is the program name). Normal output goes to
// `out`, diagnostics and progress to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace roa::cli
