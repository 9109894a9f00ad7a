#include "nashpar/hum.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "nashpar/errors.hpp"
#include "nashpar/oracle.hpp"

namespace nashpar {

namespace {

double kdot(const GameSpec& spec, const LevelValues& a, const LevelValues& b) {
    return expect_terminal_inner(a, b, spec.tree.nodes_at(spec.tree.K), 2, spec.grid);
}

double knorm(const GameSpec& spec, const LevelValues& a) { return std::sqrt(kdot(spec, a, a)); }

bool all_targets_zero(const GameSpec& spec) {
    for (const auto& t : spec.targets)
        if (t.max_abs() > 0.0) return false;
    return true;
}

struct ObservabilitySplit {
    double lhs = 0.0;
    double rhs = 0.0;
};

ObservabilitySplit observability_split(const GameSpec& spec, const LevelValues& phiT) {
    const int M = spec.tgrid.n_steps();
    const CoupledAdjointSolution adj = solve_coupled_adjoint(spec, phiT);

    ObservabilitySplit s;
    const auto& phi0 = adj.phi.slice(0);
    for (double v : phi0) s.lhs += v * v;
    s.lhs *= spec.grid.h;
    if (spec.scenario == Scenario::second_component) {
        std::vector<double> rho_bar_inv_sq(static_cast<std::size_t>(M), 0.0);
        for (int m = 0; m < M; ++m)
            rho_bar_inv_sq[static_cast<std::size_t>(m)] =
                expc(-2.0 * spec.weights.log_rho_bar[static_cast<std::size_t>(m)]);
        for (const auto& psi : adj.psi)
            s.lhs += expect_spacetime_inner(psi, psi, spec.grid, spec.tgrid, nullptr,
                                            &rho_bar_inv_sq);
    } else {
        for (const auto& psi : adj.psi)
            s.lhs += expect_spacetime_inner(psi, psi, spec.grid, spec.tgrid);
    }

    s.rhs = expect_spacetime_inner(adj.w_phi, adj.w_phi, spec.grid, spec.tgrid,
                                   &spec.layout.mask_G0, nullptr, 0, 0);
    s.rhs += expect_noise_inner(adj.Phi, adj.Phi, spec.grid, spec.tgrid);
    return s;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

} // namespace

LeaderControls extract_leader_controls(const GameSpec& spec, const CoupledAdjointSolution& adj) {
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    LeaderControls u = LeaderControls::zero(spec);
    for (int m = 0; m < M; ++m) {
        for (std::int64_t p = 0; p < u.u1.nodes(m); ++p) {
            auto u1 = u.u1.at(m, p, 0);
            auto u2 = u.u2.at(m, p, 0);
            auto u3 = u.u3.at(m, p, 0);
            auto w1 = adj.w_phi.at(m, p, 0);
            auto p1 = adj.Phi.at(m, p, 0);
            auto p2 = adj.Phi.at(m, p, 1);
            for (int j = 0; j < nx; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                if (spec.layout.mask_G0.in[ju]) u1[ju] = w1[ju];
                u2[ju] = p1[ju];
                u3[ju] = p2[ju];
            }
        }
    }
    return u;
}

LevelValues gramian_apply(const GameSpec& spec, const LevelValues& phiT) {
    const CoupledAdjointSolution adj = solve_coupled_adjoint(spec, phiT);
    const LeaderControls leaders = extract_leader_controls(spec, adj);
    const LevelValues y0(static_cast<std::size_t>(2 * spec.grid.n_x), 0.0);
    if (all_targets_zero(spec)) {
        OptimalitySolution opt = solve_optimality_system(spec, y0, leaders);
        return opt.y.slice(spec.tgrid.n_steps());
    }
    const GameSpec zspec = with_zero_targets(spec);
    OptimalitySolution opt = solve_optimality_system(zspec, y0, leaders);
    return opt.y.slice(spec.tgrid.n_steps());
}

HumSolution solve_leader(const GameSpec& spec, const LevelValues& y0, const HumParams& params) {
    if (!(params.epsilon > 0.0)) throw ValidationError("penalization epsilon must be positive");
    if (!(params.cg_tol > 0.0) || params.cg_tol > 1e-2)
        throw ValidationError("cg_tol must lie in (0, 1e-2]");
    if (params.cg_max_iter < 1) throw ValidationError("cg_max_iter must be at least 1");

    const int M = spec.tgrid.n_steps();
    const std::size_t n = static_cast<std::size_t>(spec.tree.nodes_at(spec.tree.K)) * 2 *
                          static_cast<std::size_t>(spec.grid.n_x);

    OptimalitySolution free_run =
        solve_optimality_system(spec, y0, LeaderControls::zero(spec));
    LevelValues b(n, 0.0);
    {
        const auto& yT = free_run.y.slice(M);
        for (std::size_t k = 0; k < n; ++k) b[k] = -yT[k];
    }
    const double bn = knorm(spec, b);

    HumSolution sol{LevelValues(n, 0.0), LeaderControls::zero(spec),
                    FollowerControls::zero(spec), 0.0, 0.0, 0, 0.0};
    if (bn == 0.0) {
        sol.followers = std::move(free_run.v);
        return sol;
    }

    const GameSpec zspec = with_zero_targets(spec);
    LevelValues x(n, 0.0), r = b, p = b, Ap(n, 0.0);
    double rs = kdot(spec, r, r);
    std::vector<double> hist;
    bool converged = false;
    int used = 0;
    for (int it = 1; it <= params.cg_max_iter; ++it) {
        Ap = gramian_apply(zspec, p);
        for (std::size_t k = 0; k < n; ++k) Ap[k] += params.epsilon * p[k];
        const double pAp = kdot(spec, p, Ap);
        if (!(pAp > 0.0))
            throw SolverError("solve_leader: regularized Gramian lost positive definiteness");
        const double step = rs / pAp;
        for (std::size_t k = 0; k < n; ++k) {
            x[k] += step * p[k];
            r[k] -= step * Ap[k];
        }
        const double rs_new = kdot(spec, r, r);
        const double rn = std::sqrt(rs_new);
        hist.push_back(rn);
        used = it;
        if (rn <= params.cg_tol * bn) {
            converged = true;
            break;
        }
        if (hist.size() >= 51 && rn > 0.1 * hist[hist.size() - 51])
            throw SolverError("solve_leader: conjugate gradient stalled; residual fell by less"
                              " than 10x over 50 iterations");
        const double dir = rs_new / rs;
        rs = rs_new;
        for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + dir * p[k];
    }
    if (!converged)
        throw SolverError("solve_leader: conjugate gradient did not converge within cg_max_iter");

    const CoupledAdjointSolution adj = solve_coupled_adjoint(spec, x);
    sol.leaders = extract_leader_controls(spec, adj);
    OptimalitySolution opt = solve_optimality_system(spec, y0, sol.leaders);
    const auto& yT = opt.y.slice(M);
    LevelValues defect(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) defect[k] = yT[k] + params.epsilon * x[k];
    sol.terminal_norm = knorm(spec, yT);
    sol.identity_residual = knorm(spec, defect);
    sol.J_value = evaluate_functionals(spec, sol.leaders, opt.v, opt.y).J;
    sol.followers = std::move(opt.v);
    sol.phiT_star = std::move(x);
    sol.cg_iterations = used;
    return sol;
}

EpsilonSweepResult epsilon_sweep(const GameSpec& spec, const LevelValues& y0,
                                 const std::vector<double>& eps_list, const HumParams& base) {
    if (eps_list.size() < 3)
        throw ValidationError("epsilon ladder needs at least 3 entries");
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0)) throw ValidationError("epsilon ladder entries must be positive");
        if (i > 0 && !(eps_list[i] < eps_list[i - 1]))
            throw ValidationError("epsilon ladder must be strictly decreasing");
    }
    EpsilonSweepResult res;
    std::vector<double> lx, ly;
    for (double eps : eps_list) {
        HumParams p = base;
        p.epsilon = eps;
        HumSolution sol = solve_leader(spec, y0, p);
        EpsilonSweepRow row;
        row.epsilon = eps;
        row.terminal_norm = sol.terminal_norm;
        row.u1_norm = std::sqrt(expect_spacetime_inner(sol.leaders.u1, sol.leaders.u1, spec.grid,
                                                       spec.tgrid, &spec.layout.mask_G0));
        row.u2_norm =
            std::sqrt(expect_noise_inner(sol.leaders.u2, sol.leaders.u2, spec.grid, spec.tgrid));
        row.u3_norm =
            std::sqrt(expect_noise_inner(sol.leaders.u3, sol.leaders.u3, spec.grid, spec.tgrid));
        row.J = sol.J_value;
        res.rows.push_back(row);
        res.max_control_norm = std::max(
            res.max_control_norm, std::sqrt(row.u1_norm * row.u1_norm + row.u2_norm * row.u2_norm +
                                            row.u3_norm * row.u3_norm));
        if (row.terminal_norm > 0.0) {
            lx.push_back(std::log(eps));
            ly.push_back(std::log(row.terminal_norm));
        }
    }
    res.slope = ls_slope(lx, ly);
    return res;
}

double observability_ratio(const GameSpec& spec, const LevelValues& phiT) {
    double amax = 0.0;
    for (double v : phiT) amax = std::max(amax, std::abs(v));
    if (amax == 0.0) throw ValidationError("observability probe must be nonzero");
    const ObservabilitySplit s = observability_split(spec, phiT);
    if (!(s.rhs > 0.0) || s.rhs < 1e-30 * kdot(spec, phiT, phiT))
        throw InvariantError("observability: observed energy vanished for a nonzero probe");
    return s.lhs / s.rhs;
}

ObservabilityReport observability_rayleigh(const GameSpec& spec, int n_probes,
                                           ObservabilityMode mode, std::uint64_t seed) {
    if (mode == ObservabilityMode::dense) {
        if (spec.grid.n_x > 9 || spec.tree.K > 3)
            throw ValidationError("dense observability only for n_x <= 9 and K <= 3");
        return dense_observability(spec);
    }
    if (n_probes < 1) throw ValidationError("observability needs at least one probe");
    const std::size_t n = static_cast<std::size_t>(spec.tree.nodes_at(spec.tree.K)) * 2 *
                          static_cast<std::size_t>(spec.grid.n_x);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    ObservabilityReport rep;
    rep.n_probes = n_probes;
    bool first = true;
    for (int k = 0; k < n_probes; ++k) {
        LevelValues phiT(n, 0.0);
        for (auto& v : phiT) v = unif(rng);
        const double nrm = knorm(spec, phiT);
        if (nrm == 0.0) continue;
        for (auto& v : phiT) v /= nrm;
        const ObservabilitySplit s = observability_split(spec, phiT);
        if (!(s.rhs > 0.0))
            throw InvariantError("observability: observed energy vanished for a nonzero probe");
        rep.max_ratio = std::max(rep.max_ratio, s.lhs / s.rhs);
        rep.min_gramian_eig = first ? s.rhs : std::min(rep.min_gramian_eig, s.rhs);
        first = false;
    }
    return rep;
}

} // namespace nashpar
