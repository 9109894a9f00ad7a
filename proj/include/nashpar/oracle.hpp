#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "nashpar/hum.hpp"
#include "nashpar/nash.hpp"

namespace nashpar {

// Explicit matrices for every discrete linear map on stacked unknowns,
// ordered time-major, then tree node, then component, then space. Small
// instances only; everything is dense and factored eagerly.
struct DenseInstance {
    GameSpec spec;

    std::int64_t traj_dim = 0;  // nodal 2-component trajectory, m = 0..M
    std::int64_t src_dim = 0;   // 2-component sources, m = 0..M-1
    std::int64_t src1_dim = 0;  // 1-component sources (control layout)
    std::int64_t noise_dim = 0; // 2-component branch-step slices
    std::int64_t term_dim = 0;  // terminal slice
    std::vector<std::int64_t> traj_off;  // per m
    std::vector<std::int64_t> src1_off;  // per m
    std::vector<std::int64_t> noise_off; // per m, -1 off branch steps

    // Forward composition: trajectory = T_y0 y0 + T_f f + T_g g.
    Eigen::MatrixXd T_y0, T_f, T_g;
    // Backward composition from terminal data and drift sources.
    Eigen::MatrixXd B_zT_z, B_r_z;   // nodal z trajectory
    Eigen::MatrixXd B_zT_w, B_r_w;   // pairing fields, source layout
    Eigen::MatrixXd B_zT_Zc, B_r_Zc; // martingale fields, noise layout

    std::vector<Eigen::MatrixXd> embed; // per follower: src1 -> src, comp 0 on G_i

    Eigen::VectorXd d_src;   // dt 2^-level h per source row
    Eigen::VectorXd d_src1;  // same, control layout
    Eigen::VectorXd d_noise; // dtW 2^-level h per noise row
    double c_term = 0.0;     // terminal metric scalar h 2^-K

    // Fixed-point closures, factored once: the coupled adjoint in the stacked
    // psi unknown and the optimality system in the stacked v unknown.
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_coupled;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_opt;
    Eigen::MatrixXd coupled_rhs_map;        // (nf*traj) x term: phiT -> affine part
    Eigen::MatrixXd R_mat;                  // src x (nf*traj): psi -> phi drift source
    std::vector<Eigen::MatrixXd> feedback_of_y; // src1 x traj: y -> v_i minus target part

    std::int64_t traj_index(int m, std::int64_t node, int c, int j) const;
    std::int64_t src1_index(int m, std::int64_t node, int j) const;
    std::int64_t noise_index(int m, std::int64_t node, int c, int j) const;
};

// Builds every matrix and factorization; rejects instances whose largest
// stacked unknown would exceed max_unknowns.
DenseInstance assemble(const GameSpec& spec, std::int64_t max_unknowns = 20000);

// Packing between library fields and stacked vectors.
Eigen::VectorXd pack_trajectory(const DenseInstance& inst, const AdaptedField& f);
Eigen::VectorXd pack_source(const DenseInstance& inst, const AdaptedField& f);
Eigen::VectorXd pack_control(const DenseInstance& inst, const AdaptedField& f);
Eigen::VectorXd pack_noise(const DenseInstance& inst, const AdaptedField& u2,
                           const AdaptedField& u3);
AdaptedField unpack_trajectory(const DenseInstance& inst, const Eigen::VectorXd& x);
FollowerControls unpack_controls(const DenseInstance& inst, const Eigen::VectorXd& stacked);

Eigen::VectorXd dense_state(const DenseInstance& inst, const LevelValues& y0,
                            const LeaderControls& leaders, const FollowerControls& followers);

struct DenseBackward {
    Eigen::VectorXd z;  // trajectory layout
    Eigen::VectorXd w;  // source layout
    Eigen::VectorXd Zc; // noise layout
};

DenseBackward dense_backward(const DenseInstance& inst, const LevelValues& zT,
                             const Eigen::VectorXd& r);

// Direct solve of the stacked first-order (KKT) system of the followers'
// game; the symmetric part is Cholesky-checked first.
FollowerControls solve_dense_nash(const DenseInstance& inst, const LevelValues& y0,
                                  const LeaderControls& leaders);

struct DenseCoupledAdjoint {
    Eigen::VectorXd phi; // trajectory layout
    Eigen::VectorXd w;   // source layout
    Eigen::VectorXd Zc;  // noise layout
    std::vector<Eigen::VectorXd> psi;
};

DenseCoupledAdjoint dense_coupled_adjoint(const DenseInstance& inst, const LevelValues& phiT);

struct DenseOptimality {
    Eigen::VectorXd y;
    FollowerControls v;
};

DenseOptimality dense_optimality(const DenseInstance& inst, const LevelValues& y0,
                                 const LeaderControls& leaders);

// Duality Gramian on terminal coefficients, built column by column from the
// data-free closed loop; symmetric to rounding.
Eigen::MatrixXd dense_gramian(const DenseInstance& inst);

struct DenseHum {
    LevelValues phiT_star;
    double predicted_terminal_norm = 0.0; // spectral formula from the eigensolve
    double min_gramian_eig = 0.0;
    double max_gramian_eig = 0.0;
};

DenseHum solve_dense_hum(const DenseInstance& inst, const LevelValues& y0, double epsilon);

// Generalized eigensolve of the observability forms on terminal data.
ObservabilityReport dense_observability(const GameSpec& spec);

} // namespace nashpar
