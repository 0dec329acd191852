#pragma once

#include <ostream>

namespace metosc::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kIncomplete = 3;
inline constexpr int kNotConverged = 4;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "METOSC_OUTPUT_DIR";

/// Parses argv and runs one subcommand. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace metosc::cli
