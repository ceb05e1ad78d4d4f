#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ktsnn::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kRuntime = 2;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

std::string synopsis();

}  // namespace ktsnn::cli
