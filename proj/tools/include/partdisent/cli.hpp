#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace partdisent::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kNumericError = 3 };

/// Environment variable naming the default parent directory for outputs.
inline constexpr const char* kOutputRootEnv = "PARTDISENT_OUTPUT_ROOT";

/// Runs one command line (args excludes the program name) and returns the
/// process exit code. Messages go to `out` / `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace partdisent::cli
