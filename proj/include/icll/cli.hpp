#pragma once

namespace icll {

/// Command-line entry point (train / eval / probe / das / sweep /
/// export-episodes / report). Exit codes: 0 ok, 2 non-finite-loss abort,
/// 3 usage or config error.
int run_cli(int argc, const char* const* argv);

}  // namespace icll
