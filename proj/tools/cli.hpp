#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kmf::cli {

/// Process exit codes.
enum ExitCode : int {
    exit_ok = 0,
    exit_config = 2,
    exit_data = 3,
    exit_numerical = 4,
};

/// Parses argv (argv[0] is the program name) and runs one subcommand. Normal output goes to
/// `out`; warnings and the error JSON go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kmf::cli
