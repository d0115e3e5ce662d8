#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcrsim::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;  // verification failures, witnesses found, identity violated
inline constexpr int kUsage = 2;
inline constexpr int kRuntimeError = 3;

// Environment variable naming the directory for reports when --out is absent.
inline constexpr const char* kOutDirEnv = "PCRSIM_OUT_DIR";

// "4", "1..6" or "1,3,8".
std::vector<std::size_t> parse_range(const std::string& text);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace pcrsim::cli
