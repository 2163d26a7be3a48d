#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slotforge {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point for the `slotforge` binary. Returns the process exit code:
/// 0 ok, 2 usage, 3 data format or contract, 4 numeric, 5 I/O. `args`
/// excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace slotforge
