#pragma once

#include <iosfwd>

namespace cssl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Entry point shared by the binary and the tests. Reports and warnings go to
/// `err`; commands that print results write them to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cssl::cli
