#pragma once

#include <iosfwd>

namespace chopnet::cli {

enum ExitCode : int { kSuccess = 0, kUserError = 1, kInternalError = 2 };

/// Runs one `chopnet` invocation. Structured results go to files named by
/// flags, the chop grid report to `out`, progress and diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chopnet::cli
