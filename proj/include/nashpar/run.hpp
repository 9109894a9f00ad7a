#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace nashpar {

struct CliOptions {
    std::string subcommand;
    std::string config_path;
    std::string out_dir = "out";
    int parallel = 1;
    std::uint64_t seed = 20240901;
};

std::string cli_usage();

// argv past the program name; throws ValidationError on malformed flags.
CliOptions parse_cli(int argc, const char* const* argv);

// Executes one subcommand, writes the record and tables under opt.out_dir and
// a one-line summary to out. Returns the process exit code: 0 success,
// 2 validation error, 3 solver failure, 4 invariant-check failure.
int run_cli(const CliOptions& opt, std::ostream& out, std::ostream& err);

} // namespace nashpar
