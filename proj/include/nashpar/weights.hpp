#pragma once

#include <vector>

#include "nashpar/grid.hpp"
#include "nashpar/tree.hpp"

namespace nashpar {

// All weight families are kept in log space; consumers exponentiate sums of
// logs through expc(), which clamps the exponent. Stored log values are
// capped at value_cap so they stay finite for any (lambda, mu).
inline constexpr double log_cap = 700.0;
inline constexpr double value_cap = 1e300;

double expc(double s);
bool expc_clamps(double s);
double capv(double v);

struct WeightParams {
    double lambda = 0.1;
    double mu = 0.5;
    std::vector<double> eta0; // interior nodes; 0 extended at the boundary
    double eta0_max = 1.0;
};

// eta0(x) = 4 x (L - x) / L^2: positive inside, zero at the boundary, unique
// critical point at x = L/2. The layout's O_0 must contain every node where
// the one-sided differences change sign, which pins the midpoint node inside
// O_0.
WeightParams build_eta0(const SpatialGrid& grid, const SubdomainLayout& layout,
                        double lambda = 0.1, double mu = 0.5);

// Per PDE time node m = 0..M. gamma carries a capped sentinel at t = 0 and
// t = T so that clamped exponentials of -log_rho_star vanish there while
// mu = 0 still collapses every weight to unity.
struct WeightTables {
    double lambda = 0.0;
    double mu = 0.0;
    double eta0_max = 1.0;
    double T = 0.0;
    int n_t = 0; // number of stored time nodes, K*R + 1
    int n_x = 0;

    std::vector<double> gamma;        // 1/(t(T-t)), sentinel at endpoints
    std::vector<double> ell;          // T^2/4 then t(T-t); ell(T) = 0 exactly
    std::vector<double> alpha_star;   // (1 - e^{2 mu eta0_max}) * gamma <= 0
    std::vector<double> log_rho_star; // -lambda * alpha_star / 2 >= 0
    std::vector<double> log_rho_bar;  // lambda (e^{2 mu eta0_max} - 1) / ell
    std::vector<double> log_theta;     // [m * n_x + j] = lambda * alpha(t_m, x_j)
    std::vector<double> log_theta_bar; // lambda * alpha_bar(t_m, x_j)

    double log_theta_at(int m, int j) const {
        return log_theta[static_cast<std::size_t>(m) * n_x + j];
    }
    double log_theta_bar_at(int m, int j) const {
        return log_theta_bar[static_cast<std::size_t>(m) * n_x + j];
    }
};

WeightTables build_weight_tables(const WeightParams& params, const SpatialGrid& grid,
                                 const TimeGrid& tgrid);

// Empirical counterparts of the classical weight bounds, measured with
// centered differences on time nodes whose full stencil is interior.
struct InequalityReport {
    double c1 = 0.0; // min gamma
    double c2 = 0.0; // max |gamma'| / gamma^2
    double c3 = 0.0; // max |gamma''| / gamma^3
    double c4 = 0.0; // max |alpha_t| / (e^{2 mu eta0_max} gamma^2)
    double c5 = 0.0; // max |alpha_tt| / (e^{2 mu eta0_max} gamma^3)
    bool pass = false;         // all five finite
    bool rho_bound_ok = false; // -4 log rho*(t) <= 2 log theta_bar(t,x) at all nodes
};

InequalityReport check_weight_inequalities(const WeightTables& tables, const TimeGrid& tgrid);

enum class WeightVariant { standard, bar };

// Discrete counterpart of the weighted energy
//   lambda^d E int theta^2 gamma^d z^2 + lambda^{d-2} E int theta^2 gamma^{d-2} |grad z|^2
// (bar variant: theta_bar, gamma_bar = 1/ell, no lambda powers). Left-endpoint
// rule in time over m = 0..M-1, matching expect_spacetime_inner; gradients use
// forward differences over the n_x+1 intervals with zero boundary values and a
// geometric-mean weight on each interval. Components of the field contribute
// independently and are summed. lambda = 0 collapses every factor to 1 and
// returns the plain energy. Throws if the exponent clamp fires on more than
// max_clamp_fraction of the evaluated nodes.
double carleman_energy(int d, const AdaptedField& field, const WeightTables& tables,
                       const SpatialGrid& grid, const TimeGrid& tgrid, WeightVariant variant,
                       double max_clamp_fraction = 0.25);

} // namespace nashpar
