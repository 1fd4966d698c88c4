#pragma once

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace ctxcal::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kBackendFailure = 3,
  kValidation = 4,
  kInterrupted = 130,
};

/// Runs the `ctxcal` command line. `args` excludes the program name.
/// Setting `cancel` stops a running sweep after its in-flight contexts.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::atomic<bool>* cancel = nullptr);

}  // namespace ctxcal::cli
