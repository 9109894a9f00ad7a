#pragma once

#include <cstdint>
#include <vector>

#include "nashpar/systems.hpp"

namespace nashpar {

enum class NashMethod { fixed_point, adjoint_characterization, dense_oracle };

struct NashSolution {
    FollowerControls v_star;
    std::vector<double> residuals; // per-follower first-order residuals
    NashMethod method = NashMethod::fixed_point;
    int iterations = 0;
    double contraction = 0.0;
};

// Per-follower norm of the Riesz representative of the unilateral gradient
// v -> dJ_i/dv_i at the given controls: || z_1^i|_{G_i} + beta_i cost_w v_i ||
// in the plain control norm, divided by the problem scale. The pairing field
// of the follower adjoint realizes z_1^i.
std::vector<double> nash_residual(const GameSpec& spec, const LevelValues& y0,
                                  const LeaderControls& leaders, const FollowerControls& followers);

// Damped Jacobi iteration on the best-response map; stops when every
// first-order residual is below nash_tol.
NashSolution solve_nash_fixed_point(const GameSpec& spec, const LevelValues& y0,
                                    const LeaderControls& leaders);

// Reads the equilibrium off the feedback law of solve_optimality_system.
NashSolution nash_from_adjoint(const GameSpec& spec, const LevelValues& y0,
                               const LeaderControls& leaders);

struct CoercivityEstimate {
    double rho0 = 0.0;        // min over interior time nodes of rho_*
    double lower_bound = 0.0; // min over unit probes of <L v, v>
};

// Assembly-free probe of the game operator's quadratic form
//   <L v, v> = sum_i beta_i ||v_i||^2_{cost_w} + sum_i alpha_i <sum_j L_j v_j, L_i v_i>_Od,
// minimized over n_probes random unit directions. Probes vanish on the m = 0
// slice where the cost weight is clamped. A positive result certifies
// solvability at the given beta_i.
CoercivityEstimate coercivity_estimate(const GameSpec& spec, int n_probes, std::uint64_t seed);

} // namespace nashpar
