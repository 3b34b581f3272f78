#pragma once

#include <iosfwd>

namespace deid::cli {

/// Runs the `deid` command line. Returns the process exit code; normal output
/// goes to `out`, diagnostics and progress to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deid::cli
