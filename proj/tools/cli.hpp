#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bfad::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kDegenerateCorpus = 3,
  kAllRequestsFailed = 4,
};

/// Runs the command line `args` (args[0] is the program name) writing
/// results to `out` and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bfad::cli
