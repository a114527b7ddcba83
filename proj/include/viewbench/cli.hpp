#pragma once

// Entry point of the `viewbench` command-line tool, kept in a library so
// tests can drive it in-process.

#include <ostream>

namespace viewbench {

/// Exit statuses: 0 success, 1 failed check (gradcheck) or internal error,
/// 2 input or configuration error, 3 numerical divergence.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace viewbench
