#include "nashpar/systems.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>

#include "nashpar/errors.hpp"

namespace nashpar {

namespace {

LevelValues zero_terminal(const GameSpec& spec, int n_comp) {
    const auto leaves = spec.tree.nodes_at(spec.tree.K);
    return LevelValues(static_cast<std::size_t>(leaves) * n_comp * spec.grid.n_x, 0.0);
}

// alpha_i (y - y_d^i) chi_Od on the observed components, defined for
// m = 0..M-1; the unobserved first component stays zero under
// second_component.
AdaptedField observation_source(const GameSpec& spec, const AdaptedField& y, int i) {
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    AdaptedField r(spec.tgrid, spec.tree, 2, nx, M - 1);
    r.fill(0.0);
    const int c_lo = spec.scenario == Scenario::full_observation ? 0 : 1;
    const auto& target = spec.targets[static_cast<std::size_t>(i)];
    const double a = spec.alpha[static_cast<std::size_t>(i)];
    for (int m = 0; m < M; ++m) {
        for (std::int64_t p = 0; p < r.nodes(m); ++p) {
            for (int c = c_lo; c < 2; ++c) {
                auto out = r.at(m, p, c);
                auto yv = y.at(m, p, c);
                auto td = target.at(m, p, c);
                for (int j = 0; j < nx; ++j)
                    if (spec.layout.mask_Od.in[static_cast<std::size_t>(j)])
                        out[static_cast<std::size_t>(j)] =
                            a * (yv[static_cast<std::size_t>(j)] - td[static_cast<std::size_t>(j)]);
            }
        }
    }
    return r;
}

// -sum_i alpha_i psi^i chi_Od on the observed components (nodal values).
AdaptedField coupling_source(const GameSpec& spec, const std::vector<AdaptedField>& psi) {
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    AdaptedField r(spec.tgrid, spec.tree, 2, nx, M - 1);
    r.fill(0.0);
    const int c_lo = spec.scenario == Scenario::full_observation ? 0 : 1;
    for (int i = 0; i < spec.followers(); ++i) {
        const double a = spec.alpha[static_cast<std::size_t>(i)];
        for (int m = 0; m < M; ++m) {
            for (std::int64_t p = 0; p < r.nodes(m); ++p) {
                for (int c = c_lo; c < 2; ++c) {
                    auto out = r.at(m, p, c);
                    auto pv = psi[static_cast<std::size_t>(i)].at(m, p, c);
                    for (int j = 0; j < nx; ++j)
                        if (spec.layout.mask_Od.in[static_cast<std::size_t>(j)])
                            out[static_cast<std::size_t>(j)] -= a * pv[static_cast<std::size_t>(j)];
                }
            }
        }
    }
    return r;
}

AdaptedField weighted_sum(const GameSpec& spec, const std::vector<AdaptedField>& psi) {
    const int M = spec.tgrid.n_steps();
    AdaptedField h(spec.tgrid, spec.tree, 2, spec.grid.n_x, M);
    h.fill(0.0);
    for (int i = 0; i < spec.followers(); ++i)
        h.axpy(spec.alpha[static_cast<std::size_t>(i)], psi[static_cast<std::size_t>(i)]);
    return h;
}

double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

} // namespace

SweepContext GameSpec::context() const {
    SweepContext ctx;
    ctx.A = &coeffs;
    ctx.st = &stencil;
    ctx.grid = &grid;
    ctx.tgrid = &tgrid;
    ctx.tree = &tree;
    ctx.exec = exec;
    return ctx;
}

void GameSpec::finalize() {
    const int M = tgrid.n_steps();
    cost_w.assign(static_cast<std::size_t>(M), 1.0);
    inv_cost_w.assign(static_cast<std::size_t>(M), 1.0);
    if (scenario == Scenario::full_observation) {
        for (int m = 0; m < M; ++m) {
            cost_w[static_cast<std::size_t>(m)] =
                expc(2.0 * weights.log_rho_star[static_cast<std::size_t>(m)]);
            inv_cost_w[static_cast<std::size_t>(m)] =
                expc(-2.0 * weights.log_rho_star[static_cast<std::size_t>(m)]);
        }
    }
}

void GameSpec::validate(std::ostream* warnings) const {
    const int M = tgrid.n_steps();
    const int nf = followers();
    if (nf < 1) throw ValidationError("game needs at least one follower");
    if (static_cast<int>(alpha.size()) != nf || static_cast<int>(targets.size()) != nf ||
        layout.followers() != nf)
        throw ValidationError("follower counts of alpha, beta, targets and control regions disagree");
    for (int i = 0; i < nf; ++i) {
        if (!(alpha[static_cast<std::size_t>(i)] > 0.0))
            throw ValidationError("alpha_i must be positive");
        if (!(beta[static_cast<std::size_t>(i)] >= 1.0))
            throw ValidationError("beta_i must be at least 1");
    }
    layout.validate(grid);
    if (!coeffs.finite()) throw ValidationError("coupling coefficients must be finite");
    const double stab = tgrid.dt * coeffs.norm_inf();
    if (!(stab < 1.0)) {
        std::ostringstream os;
        os << "explicit coupling step is unstable: dt * max row sum of |a_kl| = " << stab
           << " must be below 1; refine the time grid";
        throw ValidationError(os.str());
    }
    if (a0 > 0.0) coeffs.require_sign_condition(layout.mask_O0, a0);
    for (const auto& t : targets) {
        if (t.n_comp() != 2 || t.n_x() != grid.n_x || t.last_index() < M - 1)
            throw ValidationError("target fields must carry both components on every time step");
    }
    if (weights.n_t != M + 1 || weights.n_x != grid.n_x)
        throw ValidationError("weight tables do not match the grids");
    if (static_cast<int>(cost_w.size()) != M || static_cast<int>(inv_cost_w.size()) != M)
        throw ValidationError("cost weights not built; call finalize() first");
    if (scenario == Scenario::second_component && warnings != nullptr) {
        // The theory asks for finite rho_bar-weighted target energy; report
        // when the discrete quadrature exceeds the configured cap.
        std::vector<double> rho_bar_sq(static_cast<std::size_t>(M), 0.0);
        for (int m = 0; m < M; ++m)
            rho_bar_sq[static_cast<std::size_t>(m)] =
                expc(2.0 * weights.log_rho_bar[static_cast<std::size_t>(m)]);
        double q = 0.0;
        for (int i = 0; i < nf; ++i)
            q += expect_spacetime_inner(targets[static_cast<std::size_t>(i)],
                                        targets[static_cast<std::size_t>(i)], grid, tgrid,
                                        &layout.mask_Od, &rho_bar_sq);
        if (!(q <= target_weight_cap))
            *warnings << "warning: rho_bar-weighted target energy " << q
                      << " exceeds the cap " << target_weight_cap
                      << "; the tracking demand grows faster near t = T than the"
                      << " controllability weights tolerate\n";
    }
}

LeaderControls LeaderControls::zero(const GameSpec& spec) {
    const int M = spec.tgrid.n_steps();
    LeaderControls u{AdaptedField(spec.tgrid, spec.tree, 1, spec.grid.n_x, M - 1),
                     AdaptedField(spec.tgrid, spec.tree, 1, spec.grid.n_x, M - 1),
                     AdaptedField(spec.tgrid, spec.tree, 1, spec.grid.n_x, M - 1)};
    u.u1.fill(0.0);
    u.u2.fill(0.0);
    u.u3.fill(0.0);
    return u;
}

double LeaderControls::norm(const GameSpec& spec) const {
    double e = expect_spacetime_inner(u1, u1, spec.grid, spec.tgrid, &spec.layout.mask_G0);
    e += expect_noise_inner(u2, u2, spec.grid, spec.tgrid);
    e += expect_noise_inner(u3, u3, spec.grid, spec.tgrid);
    return std::sqrt(e);
}

FollowerControls FollowerControls::zero(const GameSpec& spec) {
    const int M = spec.tgrid.n_steps();
    FollowerControls f;
    f.v.reserve(static_cast<std::size_t>(spec.followers()));
    for (int i = 0; i < spec.followers(); ++i) {
        f.v.emplace_back(spec.tgrid, spec.tree, 1, spec.grid.n_x, M - 1);
        f.v.back().fill(0.0);
    }
    return f;
}

GameSpec with_zero_targets(const GameSpec& spec) {
    GameSpec out = spec;
    for (auto& t : out.targets) t.fill(0.0);
    return out;
}

double data_scale(const GameSpec& spec, const LevelValues& y0, const LeaderControls& leaders) {
    double targ = 0.0;
    for (const auto& t : spec.targets)
        targ += expect_spacetime_inner(t, t, spec.grid, spec.tgrid, &spec.layout.mask_Od);
    double init = 0.0;
    for (double v : y0) init += v * v;
    return 1.0 + std::sqrt(targ) + std::sqrt(spec.grid.h * init) + leaders.norm(spec);
}

AdaptedField solve_state(const GameSpec& spec, const LevelValues& y0,
                         const LeaderControls& leaders, const FollowerControls& followers) {
    if (y0.size() != static_cast<std::size_t>(2 * spec.grid.n_x))
        throw ValidationError("initial state must have 2 * n_x entries");
    SourceSpec src;
    src.noise = {&leaders.u2, &leaders.u3};
    LocalizedSource lead;
    lead.mask = spec.layout.mask_G0;
    lead.comp = 0;
    lead.field = &leaders.u1;
    lead.field_comp = 0;
    src.localized.push_back(lead);
    for (int i = 0; i < spec.followers(); ++i) {
        LocalizedSource ls;
        ls.mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
        ls.comp = 0;
        ls.field = &followers.v[static_cast<std::size_t>(i)];
        ls.field_comp = 0;
        src.localized.push_back(ls);
    }
    return forward_sweep(spec.context(), src, 2, y0);
}

std::vector<BackwardResult> solve_follower_adjoint(const GameSpec& spec, const AdaptedField& y) {
    std::vector<BackwardResult> out;
    out.reserve(static_cast<std::size_t>(spec.followers()));
    const LevelValues zT = zero_terminal(spec, 2);
    for (int i = 0; i < spec.followers(); ++i) {
        AdaptedField r = observation_source(spec, y, i);
        SourceSpec src;
        src.drift = &r;
        out.push_back(backward_sweep(spec.context(), src, 2, zT));
    }
    return out;
}

FollowerControls feedback_controls(const GameSpec& spec,
                                   const std::vector<BackwardResult>& adjoints) {
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    FollowerControls f = FollowerControls::zero(spec);
    for (int i = 0; i < spec.followers(); ++i) {
        const auto& mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
        const double inv_beta = 1.0 / spec.beta[static_cast<std::size_t>(i)];
        const auto& w = adjoints[static_cast<std::size_t>(i)].w;
        auto& vi = f.v[static_cast<std::size_t>(i)];
        for (int m = 0; m < M; ++m) {
            const double g = -inv_beta * spec.inv_cost_w[static_cast<std::size_t>(m)];
            for (std::int64_t p = 0; p < vi.nodes(m); ++p) {
                auto out = vi.at(m, p, 0);
                auto wp = w.at(m, p, 0);
                for (int j = 0; j < nx; ++j)
                    if (mask.in[static_cast<std::size_t>(j)])
                        out[static_cast<std::size_t>(j)] = g * wp[static_cast<std::size_t>(j)];
            }
        }
    }
    return f;
}

Functionals evaluate_functionals(const GameSpec& spec, const LeaderControls& leaders,
                                 const FollowerControls& followers, const AdaptedField& y) {
    Functionals f;
    double e = expect_spacetime_inner(leaders.u1, leaders.u1, spec.grid, spec.tgrid,
                                      &spec.layout.mask_G0);
    e += expect_noise_inner(leaders.u2, leaders.u2, spec.grid, spec.tgrid);
    e += expect_noise_inner(leaders.u3, leaders.u3, spec.grid, spec.tgrid);
    f.J = 0.5 * e;

    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    f.Ji.resize(static_cast<std::size_t>(spec.followers()), 0.0);
    AdaptedField diff(spec.tgrid, spec.tree, 2, nx, M - 1);
    for (int i = 0; i < spec.followers(); ++i) {
        const auto& target = spec.targets[static_cast<std::size_t>(i)];
        for (int m = 0; m < M; ++m) {
            auto& d = diff.slice(m);
            const auto& yv = y.slice(m);
            const auto& td = target.slice(m);
            for (std::size_t k = 0; k < d.size(); ++k) d[k] = yv[k] - td[k];
        }
        double obs = 0.0;
        if (spec.scenario == Scenario::full_observation)
            obs = expect_spacetime_inner(diff, diff, spec.grid, spec.tgrid, &spec.layout.mask_Od);
        else
            obs = expect_spacetime_inner(diff, diff, spec.grid, spec.tgrid, &spec.layout.mask_Od,
                                         nullptr, 1, 1);
        const auto& vi = followers.v[static_cast<std::size_t>(i)];
        const double ctrl = expect_spacetime_inner(vi, vi, spec.grid, spec.tgrid,
                                                   &spec.layout.mask_Gi[static_cast<std::size_t>(i)],
                                                   &spec.cost_w);
        f.Ji[static_cast<std::size_t>(i)] = 0.5 * spec.alpha[static_cast<std::size_t>(i)] * obs +
                                            0.5 * spec.beta[static_cast<std::size_t>(i)] * ctrl;
    }
    return f;
}

void PicardDamping::observe(double change, const char* what) {
    if (prev_change >= 0.0 && change > prev_change) {
        if (++increases >= 3) {
            if (halvings >= 4)
                throw SolverError(std::string(what) +
                                  ": fixed-point iteration is not contracting; increase the"
                                  " follower penalties beta_i");
            omega *= 0.5;
            ++halvings;
            increases = 0;
        }
    } else {
        increases = 0;
    }
    prev_change = change;
}

double rel_change(const AdaptedField& next, const AdaptedField& cur) {
    if (!next.same_shape(cur)) throw InvariantError("rel_change: shape mismatch");
    double num = 0.0;
    for (int m = 0; m <= next.last_index(); ++m) {
        const auto& a = next.slice(m);
        const auto& b = cur.slice(m);
        for (std::size_t k = 0; k < a.size(); ++k)
            num = std::max(num, std::abs(a[k] - b[k]));
    }
    return num / (1e-300 + next.max_abs());
}

CoupledAdjointSolution solve_coupled_adjoint(const GameSpec& spec, const LevelValues& phiT) {
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    const auto ctx = spec.context();
    const LevelValues psi0(static_cast<std::size_t>(2 * nx), 0.0);

    std::vector<AdaptedField> psi_cur;
    psi_cur.reserve(static_cast<std::size_t>(spec.followers()));
    for (int i = 0; i < spec.followers(); ++i) {
        psi_cur.emplace_back(spec.tgrid, spec.tree, 2, nx, M);
        psi_cur.back().fill(0.0);
    }

    PicardDamping damping;
    double prev_rel = -1.0;
    for (int it = 1; it <= spec.picard_max_iter; ++it) {
        AdaptedField rphi = coupling_source(spec, psi_cur);
        SourceSpec bsrc;
        bsrc.drift = &rphi;
        BackwardResult bres = backward_sweep(ctx, bsrc, 2, phiT);

        std::vector<AdaptedField> psi_next;
        psi_next.reserve(psi_cur.size());
        for (int i = 0; i < spec.followers(); ++i) {
            SourceSpec fsrc;
            LocalizedSource ls;
            ls.mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
            ls.comp = 0;
            ls.field = &bres.w;
            ls.field_comp = 0;
            ls.gain = 1.0 / spec.beta[static_cast<std::size_t>(i)];
            ls.time_weight = &spec.inv_cost_w;
            fsrc.localized.push_back(ls);
            psi_next.push_back(forward_sweep(ctx, fsrc, 2, psi0));
        }

        double rel = 0.0;
        for (std::size_t i = 0; i < psi_cur.size(); ++i)
            rel = std::max(rel, rel_change(psi_next[i], psi_cur[i]));

        if (rel <= spec.picard_tol) {
            CoupledAdjointSolution out;
            out.phi = std::move(bres.z);
            out.w_phi = std::move(bres.w);
            out.Phi = std::move(bres.Zc);
            out.h = weighted_sum(spec, psi_next);
            out.psi = std::move(psi_next);
            out.iterations = it;
            out.contraction = ratio_or_zero(rel, prev_rel);
            return out;
        }
        damping.observe(rel, "solve_coupled_adjoint");
        for (std::size_t i = 0; i < psi_cur.size(); ++i) {
            psi_cur[i].scale(1.0 - damping.omega);
            psi_cur[i].axpy(damping.omega, psi_next[i]);
        }
        prev_rel = rel;
    }
    throw SolverError("solve_coupled_adjoint: no convergence within the Picard iteration cap;"
                      " increase the follower penalties beta_i");
}

OptimalitySolution solve_optimality_system(const GameSpec& spec, const LevelValues& y0,
                                           const LeaderControls& leaders) {
    FollowerControls v_cur = FollowerControls::zero(spec);
    PicardDamping damping;
    double prev_rel = -1.0;
    for (int it = 1; it <= spec.picard_max_iter; ++it) {
        AdaptedField y = solve_state(spec, y0, leaders, v_cur);
        std::vector<BackwardResult> adj = solve_follower_adjoint(spec, y);
        FollowerControls v_next = feedback_controls(spec, adj);

        double rel = 0.0;
        for (std::size_t i = 0; i < v_cur.v.size(); ++i)
            rel = std::max(rel, rel_change(v_next.v[i], v_cur.v[i]));

        if (rel <= spec.picard_tol) {
            // Publish the feedback of the returned adjoints; the state lags
            // behind it by at most the final increment.
            OptimalitySolution out;
            out.y = std::move(y);
            out.adjoints = std::move(adj);
            out.v = std::move(v_next);
            out.iterations = it;
            out.contraction = ratio_or_zero(rel, prev_rel);
            return out;
        }
        damping.observe(rel, "solve_optimality_system");
        for (std::size_t i = 0; i < v_cur.v.size(); ++i) {
            v_cur.v[i].scale(1.0 - damping.omega);
            v_cur.v[i].axpy(damping.omega, v_next.v[i]);
        }
        prev_rel = rel;
    }
    throw SolverError("solve_optimality_system: no convergence within the Picard iteration cap;"
                      " increase the follower penalties beta_i");
}

double duality_residual(const GameSpec& spec, const LevelValues& y0,
                        const LeaderControls& leaders, const AdaptedField& y,
                        const CoupledAdjointSolution& adj) {
    const int M = spec.tgrid.n_steps();
    const double lhs_T = expect_terminal_inner(y.slice(M), adj.phi.slice(M),
                                               spec.tree.nodes_at(spec.tree.K), 2, spec.grid);
    double lhs_0 = 0.0;
    const auto& phi0 = adj.phi.slice(0);
    for (std::size_t k = 0; k < y0.size(); ++k) lhs_0 += y0[k] * phi0[k];
    lhs_0 *= spec.grid.h;
    const double lhs = lhs_T - lhs_0;

    double rhs = expect_spacetime_inner(leaders.u1, adj.w_phi, spec.grid, spec.tgrid,
                                        &spec.layout.mask_G0, nullptr, 0, 0);
    rhs += expect_noise_inner(leaders.u2, adj.Phi, spec.grid, spec.tgrid, 0, 0);
    rhs += expect_noise_inner(leaders.u3, adj.Phi, spec.grid, spec.tgrid, 0, 1);
    for (int i = 0; i < spec.followers(); ++i) {
        const auto& t = spec.targets[static_cast<std::size_t>(i)];
        const auto& p = adj.psi[static_cast<std::size_t>(i)];
        double term = 0.0;
        if (spec.scenario == Scenario::full_observation)
            term = expect_spacetime_inner(t, p, spec.grid, spec.tgrid, &spec.layout.mask_Od);
        else
            term = expect_spacetime_inner(t, p, spec.grid, spec.tgrid, &spec.layout.mask_Od,
                                          nullptr, 1, 1);
        rhs += spec.alpha[static_cast<std::size_t>(i)] * term;
    }
    return std::abs(lhs - rhs) / (1.0 + std::abs(lhs) + std::abs(rhs));
}

} // namespace nashpar
