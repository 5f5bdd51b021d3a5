#pragma once

#include <iosfwd>

namespace dr1 {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitIo = 2,
  kExitAudit = 3,
  kExitNumeric = 4,
  kExitAllFailed = 5,
};

// Entry point behind the dementia-r1 executable. Subcommands: gen-cohort,
// build-samples, train, experiment.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dr1
