#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vlme {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;

/// Runs one `vlme` command. `args` excludes the program name. The report
/// goes to --out (default: `out`); diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vlme
