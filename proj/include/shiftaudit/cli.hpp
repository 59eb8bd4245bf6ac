#pragma once

namespace shiftaudit {

/// Entry point of the `shiftaudit` tool. Returns the process exit code:
/// 0 success, 1 usage error, 2 data error, 3 numeric non-convergence (the
/// artifact is still written). Diagnostics go to stderr.
int run_cli(int argc, char** argv);

}  // namespace shiftaudit
