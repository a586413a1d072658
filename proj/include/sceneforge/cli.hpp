#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sceneforge {

inline constexpr int kConfigVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitBackend = 2, kExitIo = 3 };

/// Entry point behind the `sceneforge` binary. Never throws; returns the exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sceneforge
