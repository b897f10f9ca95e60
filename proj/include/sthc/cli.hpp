#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sthc::cli {

// Stable exit codes for scripting.
inline constexpr int kOk = 0;
inline constexpr int kIoError = 2;
inline constexpr int kDiverged = 3;
inline constexpr int kOpticsError = 4;
inline constexpr int kUsageError = 64;

// Entry point of the `sthc` executable: subcommands synth, train, eval, plan.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sthc::cli
