// Command-line front end. Subcommands: levels, clock, simulate, memory, noise,
// qsweep. Each writes CSV files and a manifest.txt into the output directory
// (--out, else $SPINMEM_OUTPUT_DIR, else [output] directory, else ".").

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spinmem {

inline constexpr const char* kVersion = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config_error = 2;
inline constexpr int numerical_failure = 3;
}  // namespace exit_code

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spinmem
