#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fdnet::cli {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2, kIo = 3 };

/// Runs the fdnet command line. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fdnet::cli
