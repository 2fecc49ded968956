#pragma once

#include <iosfwd>

namespace disentangle::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kNumericalError = 3 };

/// Entry point behind the executable: fit, simulate, validate, report.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace disentangle::cli
