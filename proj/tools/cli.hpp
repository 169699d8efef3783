#pragma once

#include <ostream>

namespace saol {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitCheckpoint = 4;

// Entry point of the `saol` tool: train, eval, wsol, visualize.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace saol
