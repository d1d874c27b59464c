#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rankope::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

inline constexpr const char* kVersion = "1.0.0";

/// Runs one command line (without the program name) and returns the exit code.
///   rankope <generate|validate|evaluate|optimize|sweep> [options]
///   rankope --from-manifest <manifest.json> [--out <dir>]
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rankope::cli
