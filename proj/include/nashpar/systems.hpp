#pragma once

#include <iosfwd>
#include <vector>

#include "nashpar/sweep.hpp"
#include "nashpar/weights.hpp"

namespace nashpar {

// full_observation: followers track both state components and pay the
// rho_*^2-weighted control cost. second_component: they track only the
// second component and pay the plain cost.
enum class Scenario { full_observation, second_component };

struct GameSpec {
    SpatialGrid grid;
    TimeGrid tgrid;
    NoiseTree tree;
    SubdomainLayout layout;
    CouplingField coeffs;
    double a0 = 0.0; // a_21 sign-condition threshold on O_0; 0 skips the check
    std::vector<double> alpha;
    std::vector<double> beta;
    std::vector<AdaptedField> targets; // one 2-component field per follower
    Scenario scenario = Scenario::full_observation;
    WeightParams wparams;
    WeightTables weights;
    DiffusionStencil stencil;
    ExecPolicy exec;

    double picard_tol = 1e-11;
    int picard_max_iter = 200;
    double nash_tol = 1e-9;
    double target_weight_cap = 1e12;

    // Per time step m = 0..M-1: follower cost weight (rho_*^2 under
    // full_observation, 1 otherwise) and its reciprocal, the factor in every
    // feedback law. Built by finalize(); endpoint clamping makes the product
    // of the two exactly 1 to rounding.
    std::vector<double> cost_w;
    std::vector<double> inv_cost_w;

    int followers() const { return static_cast<int>(beta.size()); }
    SweepContext context() const;
    void finalize();
    // Throws ValidationError on any violated structural condition; streams
    // soft diagnostics (the rho-weighted target quadrature cap) to warnings.
    void validate(std::ostream* warnings = nullptr) const;
};

struct LeaderControls {
    AdaptedField u1; // drift control, single component, supported on G_0
    AdaptedField u2; // noise controls, read on branch steps only
    AdaptedField u3;

    static LeaderControls zero(const GameSpec& spec);
    double norm(const GameSpec& spec) const;
};

struct FollowerControls {
    std::vector<AdaptedField> v; // single component each, supported on G_i

    static FollowerControls zero(const GameSpec& spec);
};

// 1 + ||targets|| + ||y0|| + ||leaders|| in their natural norms; the
// normalization used by residual reports.
double data_scale(const GameSpec& spec, const LevelValues& y0, const LeaderControls& leaders);

// Copy of the instance with every target zeroed; the data-free instance the
// duality Gramian is built on.
GameSpec with_zero_targets(const GameSpec& spec);

// Forward state under given controls. With followers zero this is the
// decoupled auxiliary state (the q-system of the Nash reduction).
AdaptedField solve_state(const GameSpec& spec, const LevelValues& y0,
                         const LeaderControls& leaders, const FollowerControls& followers);

// Per-follower backward adjoints driven by the tracking mismatch of the given
// state; terminal data zero. Scenario selects which components observe.
std::vector<BackwardResult> solve_follower_adjoint(const GameSpec& spec, const AdaptedField& y);

// v_i = -(1/beta_i) inv_cost_w * (pairing field z_1^i) on G_i.
FollowerControls feedback_controls(const GameSpec& spec,
                                   const std::vector<BackwardResult>& adjoints);

struct Functionals {
    double J = 0.0;
    std::vector<double> Ji;
};

Functionals evaluate_functionals(const GameSpec& spec, const LeaderControls& leaders,
                                 const FollowerControls& followers, const AdaptedField& y);

struct CoupledAdjointSolution {
    AdaptedField phi;   // nodal backward pair
    AdaptedField w_phi; // its pairing fields
    AdaptedField Phi;   // martingale pair, branch slices
    std::vector<AdaptedField> psi; // forward pairs, psi^i(0) = 0
    AdaptedField h;     // h_k = sum_i alpha_i psi_k^i
    int iterations = 0;
    double contraction = 0.0;
};

CoupledAdjointSolution solve_coupled_adjoint(const GameSpec& spec, const LevelValues& phiT);

struct OptimalitySolution {
    AdaptedField y;
    std::vector<BackwardResult> adjoints;
    FollowerControls v; // the feedback law applied to the returned adjoints
    int iterations = 0;
    double contraction = 0.0;
};

OptimalitySolution solve_optimality_system(const GameSpec& spec, const LevelValues& y0,
                                           const LeaderControls& leaders);

// Normalized defect |LHS - RHS| / (1 + |LHS| + |RHS|) of the discrete duality
// identity pairing a closed-loop state with a coupled adjoint solution:
//   E<y(T), phi(T)> - E<y0, phi(0)>
//     = E II (chi_G0 u1 phi1 + u2 Phi1 + u3 Phi2)
//     + sum_i sum_j alpha_i E II y_{j,d}^i psi_j^i chi_Od.
double duality_residual(const GameSpec& spec, const LevelValues& y0,
                        const LeaderControls& leaders, const AdaptedField& y,
                        const CoupledAdjointSolution& adj);

// Damped-iteration bookkeeping shared by the forward-backward solvers: after
// three consecutive relative-change increases the relaxation factor halves,
// at most four times; the next detection is a hard failure.
struct PicardDamping {
    double omega = 1.0;
    int increases = 0;
    int halvings = 0;
    double prev_change = -1.0;

    void observe(double change, const char* what);
};

double rel_change(const AdaptedField& next, const AdaptedField& cur);

} // namespace nashpar
