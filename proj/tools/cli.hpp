#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace weatherseg::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kRuntimeError = 4;

// Overrides the configured output root when set.
inline constexpr const char* kOutputRootEnv = "WEATHERSEG_OUTPUT_ROOT";

// Entry point shared by the executable and the tests. `args` excludes the
// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace weatherseg::cli
