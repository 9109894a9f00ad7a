#pragma once

#include <cstdint>
#include <vector>

#include "nashpar/systems.hpp"

namespace nashpar {

struct HumParams {
    double epsilon = 1e-3;
    double cg_tol = 1e-8;
    int cg_max_iter = 500;
};

struct HumSolution {
    LevelValues phiT_star;
    LeaderControls leaders;
    FollowerControls followers; // induced by the closed loop under the leaders
    double terminal_norm = 0.0;
    double J_value = 0.0;
    int cg_iterations = 0;
    double identity_residual = 0.0; // || y(T) + epsilon * phiT_star ||
};

// Leader triple read off a coupled adjoint solution: u1 = chi_G0 (pairing
// field of phi_1), u2 = Phi_1, u3 = Phi_2.
LeaderControls extract_leader_controls(const GameSpec& spec, const CoupledAdjointSolution& adj);

// Action of the duality Gramian on a terminal pair: coupled adjoint, extract
// the leader triple, drive the data-free closed loop with it, return y(T).
// Targets in spec are ignored (a zeroed copy is made if needed).
LevelValues gramian_apply(const GameSpec& spec, const LevelValues& phiT);

// Penalized duality synthesis: solve (G + eps I) phiT = -y_free(T) by
// conjugate gradient in the terminal inner product, then drive the full
// instance with the extracted leaders.
HumSolution solve_leader(const GameSpec& spec, const LevelValues& y0, const HumParams& params);

struct EpsilonSweepRow {
    double epsilon = 0.0;
    double terminal_norm = 0.0;
    double u1_norm = 0.0;
    double u2_norm = 0.0;
    double u3_norm = 0.0;
    double J = 0.0;
};

struct EpsilonSweepResult {
    std::vector<EpsilonSweepRow> rows;
    double slope = 0.0; // least-squares slope of log ||y(T)|| vs log epsilon
    double max_control_norm = 0.0;
};

// Runs solve_leader over a strictly decreasing epsilon ladder (>= 3 entries).
EpsilonSweepResult epsilon_sweep(const GameSpec& spec, const LevelValues& y0,
                                 const std::vector<double>& eps_list, const HumParams& base);

enum class ObservabilityMode { sampled, dense };

struct ObservabilityReport {
    double max_ratio = 0.0;
    double min_gramian_eig = 0.0;
    int n_probes = 0;
};

// LHS / RHS of the scenario's observability inequality for one terminal
// probe: initial adjoint energy plus the (second_component: rho_bar^-2
// weighted) psi energies, over the observed energy
// E II chi_G0 |phi_1|^2 + |Phi_1|^2 + |Phi_2|^2. Throws on a zero probe; a
// numerically vanishing denominator for a nonzero probe is an invariant
// failure.
double observability_ratio(const GameSpec& spec, const LevelValues& phiT);

// max_ratio over probes (or the dense generalized eigensolve) and an estimate
// of the smallest Gramian eigenvalue in the terminal inner product.
ObservabilityReport observability_rayleigh(const GameSpec& spec, int n_probes,
                                           ObservabilityMode mode, std::uint64_t seed);

} // namespace nashpar
