#pragma once

namespace lll::cli {

// Builds and dispatches the command line (train, eval, generate, grid,
// sweep). Returns the process exit status: 0 success, 1 usage/config error,
// 2 runtime failure.
int run_cli(int argc, char** argv);

}  // namespace lll::cli
