#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nashpar/hum.hpp"

namespace nashpar {

// A fully built run read from one flat key = value file. The echo keeps the
// parsed pairs in file order so records can reproduce the configuration.
struct RunConfig {
    GameSpec spec;
    LevelValues y0;
    HumParams hum;
    std::vector<double> eps_list{1e-2, 1e-3, 1e-4};
    int n_probes = 50;
    ObservabilityMode obs_mode = ObservabilityMode::sampled;
    std::vector<std::pair<std::string, std::string>> echo;
};

// Accepted keys, all optional unless noted:
//   n_x, length, T, K, R, followers      grid shape (required)
//   G0, Od, O0, G1..G<followers>         regions as lo:hi intervals (required)
//   a11, a12, a21, a22                   coupling constants (required)
//   a0                                   sign-condition threshold on O0
//   lambda, mu                           weight parameters
//   scenario                             full | second
//   alpha, beta                          per-follower arrays
//   y0_1, y0_2                           sine coefficients of the initial state
//   target<i>_1, target<i>_2             sine coefficients of follower targets
//   picard_tol, picard_max_iter, nash_tol, target_weight_cap
//   epsilon, cg_tol, cg_max_iter, eps_list, n_probes, obs_mode
// Unknown or duplicate keys are rejected.
RunConfig load_config(const std::string& path, std::ostream* warnings = nullptr);

// Same grammar from an already-read buffer; path only labels error messages.
RunConfig parse_config(const std::string& text, const std::string& label,
                       std::ostream* warnings = nullptr);

// Spatial profile from Fourier sine coefficients: sum_k c_k sin((k+1) pi x / L).
std::vector<double> sine_profile(const SpatialGrid& grid, const std::vector<double>& coeffs);

} // namespace nashpar
