#include "nashpar/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>

#include "nashpar/errors.hpp"

namespace nashpar {

double expc(double s) {
    if (s > log_cap) s = log_cap;
    if (s < -log_cap) s = -log_cap;
    return std::exp(s);
}

bool expc_clamps(double s) { return s > log_cap || s < -log_cap; }

double capv(double v) {
    if (v > value_cap) return value_cap;
    if (v < -value_cap) return -value_cap;
    return v;
}

WeightParams build_eta0(const SpatialGrid& grid, const SubdomainLayout& layout, double lambda,
                        double mu) {
    if (lambda < 0.0 || mu < 0.0)
        throw ValidationError("build_eta0: lambda and mu must be nonnegative");
    const double L = grid.length;
    WeightParams p;
    p.lambda = lambda;
    p.mu = mu;
    p.eta0.resize(static_cast<std::size_t>(grid.n_x));
    for (int j = 0; j < grid.n_x; ++j) {
        const double x = grid.nodes[static_cast<std::size_t>(j)];
        p.eta0[static_cast<std::size_t>(j)] = 4.0 * x * (L - x) / (L * L);
    }
    p.eta0_max = 1.0;

    const int j_mid = static_cast<int>(std::llround(0.5 * (grid.n_x + 1))) - 1;
    if (!layout.mask_O0.in[static_cast<std::size_t>(std::clamp(j_mid, 0, grid.n_x - 1))])
        throw ValidationError("build_eta0: O_0 must contain the domain midpoint node");

    // Zero-extended one-sided differences; a sign change marks a discrete
    // critical node, which must lie inside O_0.
    for (int j = 0; j < grid.n_x; ++j) {
        const double left = (j == 0) ? 0.0 : p.eta0[static_cast<std::size_t>(j - 1)];
        const double right = (j == grid.n_x - 1) ? 0.0 : p.eta0[static_cast<std::size_t>(j + 1)];
        const double here = p.eta0[static_cast<std::size_t>(j)];
        const double bwd = here - left;
        const double fwd = right - here;
        if (fwd * bwd <= 0.0 && !layout.mask_O0.in[static_cast<std::size_t>(j)])
            throw ValidationError("build_eta0: discrete critical node of eta0 outside O_0");
    }
    return p;
}

WeightTables build_weight_tables(const WeightParams& params, const SpatialGrid& grid,
                                 const TimeGrid& tgrid) {
    const int M = tgrid.n_steps();
    const double lam = params.lambda;
    const double e2 = expc(2.0 * params.mu * params.eta0_max);

    WeightTables t;
    t.lambda = lam;
    t.mu = params.mu;
    t.eta0_max = params.eta0_max;
    t.T = tgrid.T;
    t.n_t = M + 1;
    t.n_x = grid.n_x;
    t.gamma.resize(static_cast<std::size_t>(M) + 1);
    t.ell.resize(static_cast<std::size_t>(M) + 1);
    t.alpha_star.resize(static_cast<std::size_t>(M) + 1);
    t.log_rho_star.resize(static_cast<std::size_t>(M) + 1);
    t.log_rho_bar.resize(static_cast<std::size_t>(M) + 1);
    t.log_theta.resize((static_cast<std::size_t>(M) + 1) * grid.n_x);
    t.log_theta_bar.resize((static_cast<std::size_t>(M) + 1) * grid.n_x);

    for (int m = 0; m <= M; ++m) {
        const std::size_t mm = static_cast<std::size_t>(m);
        const double tm = tgrid.t(m);
        // Endpoints are classified by index so rounding in m*dt cannot leak a
        // finite gamma into t = 0 or t = T.
        const bool endpoint = (m == 0 || m == M);
        const double gamma = endpoint ? value_cap : 1.0 / (tm * (tgrid.T - tm));
        const double ell = (m == M) ? 0.0
                                    : (tm <= 0.5 * tgrid.T ? 0.25 * tgrid.T * tgrid.T
                                                           : tm * (tgrid.T - tm));
        const double gamma_bar = (ell > 0.0) ? 1.0 / ell : value_cap;
        t.gamma[mm] = gamma;
        t.ell[mm] = ell;
        t.alpha_star[mm] = capv((1.0 - e2) * gamma);
        t.log_rho_star[mm] = capv(0.5 * lam * (e2 - 1.0) * gamma);
        t.log_rho_bar[mm] = capv(lam * (e2 - 1.0) * gamma_bar);
        for (int j = 0; j < grid.n_x; ++j) {
            const double c = expc(params.mu * params.eta0[static_cast<std::size_t>(j)]) - e2;
            t.log_theta[mm * grid.n_x + j] = capv(lam * c * gamma);
            t.log_theta_bar[mm * grid.n_x + j] = capv(lam * c * gamma_bar);
        }
    }
    return t;
}

InequalityReport check_weight_inequalities(const WeightTables& tables, const TimeGrid& tgrid) {
    const int M = tgrid.n_steps();
    if (M < 8) throw ValidationError("check_weight_inequalities: needs K*R >= 8 time steps");

    InequalityReport r;
    r.c1 = std::numeric_limits<double>::infinity();
    for (int m = 1; m < M; ++m) r.c1 = std::min(r.c1, tables.gamma[static_cast<std::size_t>(m)]);

    const double e2 = expc(2.0 * tables.mu * tables.eta0_max);
    const double dt = tgrid.dt;
    for (int m = 2; m <= M - 2; ++m) {
        const double gm = tables.gamma[static_cast<std::size_t>(m)];
        const double gp = tables.gamma[static_cast<std::size_t>(m + 1)];
        const double gl = tables.gamma[static_cast<std::size_t>(m - 1)];
        const double d1 = (gp - gl) / (2.0 * dt);
        const double d2 = (gp - 2.0 * gm + gl) / (dt * dt);
        r.c2 = std::max(r.c2, std::abs(d1) / (gm * gm));
        r.c3 = std::max(r.c3, std::abs(d2) / (gm * gm * gm));
        // alpha(t,x) = c(x) gamma(t) with max |c| = e2 - 1 at the boundary.
        r.c4 = std::max(r.c4, (e2 - 1.0) * std::abs(d1) / (e2 * gm * gm));
        r.c5 = std::max(r.c5, (e2 - 1.0) * std::abs(d2) / (e2 * gm * gm * gm));
    }
    r.pass = std::isfinite(r.c1) && std::isfinite(r.c2) && std::isfinite(r.c3) &&
             std::isfinite(r.c4) && std::isfinite(r.c5);

    r.rho_bound_ok = true;
    for (int m = 0; m <= M; ++m)
        for (int j = 0; j < tables.n_x; ++j)
            if (-4.0 * tables.log_rho_star[static_cast<std::size_t>(m)] >
                2.0 * tables.log_theta_bar_at(m, j))
                r.rho_bound_ok = false;
    return r;
}

double carleman_energy(int d, const AdaptedField& field, const WeightTables& tables,
                       const SpatialGrid& grid, const TimeGrid& tgrid, WeightVariant variant,
                       double max_clamp_fraction) {
    if (field.n_x() != grid.n_x)
        throw InvariantError("carleman_energy: field and grid disagree on n_x");
    const int m_last = std::min(field.last_index(), tgrid.n_steps() - 1);
    const int n_x = grid.n_x;
    const int n_comp = field.n_comp();
    const double h = grid.h;
    const double inv_h2 = 1.0 / (h * h);
    const bool plain = tables.lambda == 0.0;
    const bool bar = variant == WeightVariant::bar;
    const double pref0 = (plain || bar) ? 1.0 : std::pow(tables.lambda, d);
    const double pref1 = (plain || bar) ? 1.0 : std::pow(tables.lambda, d - 2);

    long long clamped = 0;
    long long evaluated = 0;
    double acc = 0.0;
    for (int m = 0; m <= m_last; ++m) {
        const std::size_t mm = static_cast<std::size_t>(m);
        const double lg = bar ? std::log(tables.ell[mm] > 0.0 ? 1.0 / tables.ell[mm] : value_cap)
                              : std::log(tables.gamma[mm]);
        // Boundary nodes carry eta0 = 0, where alpha equals its minimum.
        const double log_theta_bnd =
            bar ? -tables.log_rho_bar[mm] : -2.0 * tables.log_rho_star[mm];
        const double node_w = tgrid.dt * h / static_cast<double>(field.nodes(m));
        const std::int64_t nodes = field.nodes(m);
        double lvl = 0.0;
        for (std::int64_t p = 0; p < nodes; ++p)
            for (int c = 0; c < n_comp; ++c) {
                auto z = field.at(m, p, c);
                for (int j = 0; j <= n_x; ++j) {
                    const double ltl =
                        (j == 0) ? log_theta_bnd
                                 : (bar ? tables.log_theta_bar_at(m, j - 1)
                                        : tables.log_theta_at(m, j - 1));
                    if (j < n_x) {
                        if (!plain) {
                            const double lt = bar ? tables.log_theta_bar_at(m, j)
                                                  : tables.log_theta_at(m, j);
                            const double s0 = 2.0 * lt + d * lg;
                            ++evaluated;
                            if (expc_clamps(s0)) ++clamped;
                            lvl += pref0 * expc(s0) * z[static_cast<std::size_t>(j)] *
                                   z[static_cast<std::size_t>(j)];
                        } else {
                            lvl += z[static_cast<std::size_t>(j)] * z[static_cast<std::size_t>(j)];
                        }
                    }
                    const double zl = (j == 0) ? 0.0 : z[static_cast<std::size_t>(j - 1)];
                    const double zr = (j == n_x) ? 0.0 : z[static_cast<std::size_t>(j)];
                    const double dz2 = (zr - zl) * (zr - zl) * inv_h2;
                    if (!plain) {
                        const double ltr = (j == n_x) ? log_theta_bnd
                                                      : (bar ? tables.log_theta_bar_at(m, j)
                                                             : tables.log_theta_at(m, j));
                        const double s1 = ltl + ltr + (d - 2) * lg;
                        ++evaluated;
                        if (expc_clamps(s1)) ++clamped;
                        lvl += pref1 * expc(s1) * dz2;
                    } else {
                        lvl += dz2;
                    }
                }
            }
        acc += node_w * lvl;
    }
    if (!plain && evaluated > 0) {
        const double frac = static_cast<double>(clamped) / static_cast<double>(evaluated);
        if (frac > max_clamp_fraction) {
            std::ostringstream os;
            os << "carleman_energy: exponent clamp fired on " << 100.0 * frac
               << "% of nodes (limit " << 100.0 * max_clamp_fraction
               << "%); reduce lambda or refine the time grid";
            throw SolverError(os.str());
        }
    }
    return acc;
}

} // namespace nashpar
