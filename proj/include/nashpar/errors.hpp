#pragma once

#include <stdexcept>
#include <string>

namespace nashpar {

// Exit-code contract of the CLI: 2 validation, 3 solver, 4 invariant check.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SolverError : std::runtime_error {
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvariantError : std::runtime_error {
    explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace nashpar
