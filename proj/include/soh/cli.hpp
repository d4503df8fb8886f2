#pragma once

#include <string>
#include <vector>

namespace soh::cli {

// Exit code contract: 0 success, 1 usage error, 2 data error, 3 numerical
// error. Unknown flags are rejected.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitNumericError = 3;

int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args exclude the program name

}  // namespace soh::cli
