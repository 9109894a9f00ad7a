#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nashpar/exec.hpp"
#include "nashpar/grid.hpp"
#include "nashpar/tree.hpp"

namespace nashpar {

// Dirichlet 3-point Laplacian on the interior nodes with a one-time Thomas
// factorization of (I - dt*Lap_h). The matrix is constant symmetric
// tridiagonal, so the factorization is two vectors.
struct DiffusionStencil {
    int n_x = 0;
    double dt = 0.0;
    double h = 0.0;
    double off = 0.0; // off-diagonal entry -dt/h^2
    std::vector<double> sub_fac; // forward-elimination multipliers
    std::vector<double> inv_diag;

    static DiffusionStencil make(const SpatialGrid& grid, const TimeGrid& tgrid);

    // x := (I - dt*Lap_h)^{-1} x
    void solve_in_place(double* x) const;
    // out := (I - dt*Lap_h) x
    void apply(const double* x, double* out) const;
};

// Zeroth-order 2x2 coupling a_ij(t_m, x_j), sampled at the left endpoint of
// each time step.
struct CouplingField {
    int n_comp = 2;
    int n_t = 0;
    int n_x = 0;
    std::array<std::vector<double>, 4> a; // a11, a12, a21, a22

    static CouplingField constant(double a11, double a12, double a21, double a22, int n_t,
                                  int n_x);

    double at(int row, int col, int m, int j) const {
        return a[static_cast<std::size_t>(2 * row + col)]
                [static_cast<std::size_t>(m) * n_x + j];
    }
    double norm_inf() const;
    bool finite() const;
    // a_21 must keep a uniform sign with |a_21| >= a0 on mask for all t.
    void require_sign_condition(const NodeMask& mask_O0, double a0) const;
};

// One additive drift contribution gain * time_weight[m] * field(m,:,field_comp)
// restricted to mask, injected into component comp.
struct LocalizedSource {
    NodeMask mask;
    int comp = 0;
    const AdaptedField* field = nullptr;
    int field_comp = 0;
    double gain = 1.0;
    const std::vector<double>* time_weight = nullptr;
};

struct SourceSpec {
    const AdaptedField* drift = nullptr; // full n_comp drift source, slices 0..M-1
    std::array<const AdaptedField*, 2> noise{nullptr, nullptr}; // per component
    std::vector<LocalizedSource> localized;
};

struct SweepContext {
    const CouplingField* A = nullptr;
    const DiffusionStencil* st = nullptr;
    const SpatialGrid* grid = nullptr;
    const TimeGrid* tgrid = nullptr;
    const NoiseTree* tree = nullptr;
    ExecPolicy exec;
};

// Semi-implicit Euler step m -> m+1: solve (I - dt*Lap_h) y* = y_m +
// dt*(A_m y_m + f_m) per component, then branch the tree with the noise
// sources on noise-boundary steps.
void forward_step(const SweepContext& ctx, const SourceSpec& src, int n_comp, int m,
                  const LevelValues& y_curr, LevelValues& y_next);

// Exact transpose of forward_step. On a branch step z_{m+1} first splits into
// its conditional expectation and martingale coefficient Z_m; then
// w_m = (I - dt*Lap_h)^{-1} E[z_{m+1}|F_{k(m)}] and
// z_m = (I + dt*A_m^T) w_m + dt*r_m. The pairing field w_m is what every
// duality-derived formula consumes; z_m is the nodal value.
void backward_step(const SweepContext& ctx, const SourceSpec& src, int n_comp, int m,
                   const LevelValues& z_next, LevelValues& z_curr, LevelValues& w_curr,
                   LevelValues& Zc_curr);

AdaptedField forward_sweep(const SweepContext& ctx, const SourceSpec& src, int n_comp,
                           const LevelValues& y0);

struct BackwardResult {
    AdaptedField z;  // nodal values, slices 0..M
    AdaptedField w;  // pairing fields, slices 0..M-1
    AdaptedField Zc; // martingale coefficients; nonzero only on branch steps
};

BackwardResult backward_sweep(const SweepContext& ctx, const SourceSpec& src, int n_comp,
                              const LevelValues& zT);

// sum over branch steps of dtW * E<a_m, b_m>: the quadrature pairing noise
// controls with martingale coefficients. Component selection as in
// expect_spacetime_inner.
double expect_noise_inner(const AdaptedField& a, const AdaptedField& b, const SpatialGrid& grid,
                          const TimeGrid& tgrid, int a_comp = -1, int b_comp = -1);

} // namespace nashpar
