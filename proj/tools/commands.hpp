#pragma once

#include <ostream>

namespace chidek::cli {

// Process exit codes.
enum Exit : int {
  kOk = 0,
  kCheckFailed = 1,
  kInputError = 2,
  kNumericError = 3,
  kMissingCheckpoint = 4,
  kConfigMismatch = 5,
  kEmptyManifest = 6,
};

// Parses argv and runs one subcommand. Reports go to `out`, diagnostics to
// `err`; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chidek::cli
