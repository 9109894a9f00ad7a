#include "nashpar/nash.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nashpar/errors.hpp"

namespace nashpar {

namespace {

// R_i = w_1^{z,i} + beta_i (cost_w v_i) on G_i; the inner product order keeps
// the clamped endpoint weights from overflowing before they cancel.
AdaptedField residual_field(const GameSpec& spec, const BackwardResult& adj,
                            const AdaptedField& vi, int i) {
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    const auto& mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
    const double b = spec.beta[static_cast<std::size_t>(i)];
    AdaptedField r(spec.tgrid, spec.tree, 1, nx, M - 1);
    r.fill(0.0);
    for (int m = 0; m < M; ++m) {
        const double cw = spec.cost_w[static_cast<std::size_t>(m)];
        for (std::int64_t p = 0; p < r.nodes(m); ++p) {
            auto out = r.at(m, p, 0);
            auto w1 = adj.w.at(m, p, 0);
            auto vv = vi.at(m, p, 0);
            for (int j = 0; j < nx; ++j)
                if (mask.in[static_cast<std::size_t>(j)])
                    out[static_cast<std::size_t>(j)] =
                        w1[static_cast<std::size_t>(j)] +
                        b * (cw * vv[static_cast<std::size_t>(j)]);
        }
    }
    return r;
}

std::vector<double> residual_norms(const GameSpec& spec, const std::vector<BackwardResult>& adj,
                                   const FollowerControls& followers, double scale) {
    std::vector<double> out(static_cast<std::size_t>(spec.followers()), 0.0);
    for (int i = 0; i < spec.followers(); ++i) {
        AdaptedField r = residual_field(spec, adj[static_cast<std::size_t>(i)],
                                        followers.v[static_cast<std::size_t>(i)], i);
        const double e = expect_spacetime_inner(r, r, spec.grid, spec.tgrid,
                                                &spec.layout.mask_Gi[static_cast<std::size_t>(i)]);
        out[static_cast<std::size_t>(i)] = std::sqrt(e) / scale;
    }
    return out;
}

} // namespace

std::vector<double> nash_residual(const GameSpec& spec, const LevelValues& y0,
                                  const LeaderControls& leaders,
                                  const FollowerControls& followers) {
    const AdaptedField y = solve_state(spec, y0, leaders, followers);
    const std::vector<BackwardResult> adj = solve_follower_adjoint(spec, y);
    return residual_norms(spec, adj, followers, data_scale(spec, y0, leaders));
}

NashSolution solve_nash_fixed_point(const GameSpec& spec, const LevelValues& y0,
                                    const LeaderControls& leaders) {
    const double scale = data_scale(spec, y0, leaders);
    FollowerControls v_cur = FollowerControls::zero(spec);
    PicardDamping damping;
    double prev_res = -1.0;
    for (int it = 1; it <= spec.picard_max_iter; ++it) {
        AdaptedField y = solve_state(spec, y0, leaders, v_cur);
        std::vector<BackwardResult> adj = solve_follower_adjoint(spec, y);
        std::vector<double> res = residual_norms(spec, adj, v_cur, scale);
        const double worst = *std::max_element(res.begin(), res.end());
        if (worst <= spec.nash_tol) {
            NashSolution out;
            out.v_star = std::move(v_cur);
            out.residuals = std::move(res);
            out.method = NashMethod::fixed_point;
            out.iterations = it;
            out.contraction = prev_res > 0.0 ? worst / prev_res : 0.0;
            return out;
        }
        FollowerControls v_next = feedback_controls(spec, adj);
        double rel = 0.0;
        for (std::size_t i = 0; i < v_cur.v.size(); ++i)
            rel = std::max(rel, rel_change(v_next.v[i], v_cur.v[i]));
        damping.observe(rel, "solve_nash_fixed_point");
        for (std::size_t i = 0; i < v_cur.v.size(); ++i) {
            v_cur.v[i].scale(1.0 - damping.omega);
            v_cur.v[i].axpy(damping.omega, v_next.v[i]);
        }
        prev_res = worst;
    }
    throw SolverError("solve_nash_fixed_point: first-order residuals did not reach nash_tol"
                      " within the iteration cap; increase the follower penalties beta_i");
}

NashSolution nash_from_adjoint(const GameSpec& spec, const LevelValues& y0,
                               const LeaderControls& leaders) {
    OptimalitySolution opt = solve_optimality_system(spec, y0, leaders);
    NashSolution out;
    out.residuals = nash_residual(spec, y0, leaders, opt.v);
    out.v_star = std::move(opt.v);
    out.method = NashMethod::adjoint_characterization;
    out.iterations = opt.iterations;
    out.contraction = opt.contraction;
    return out;
}

CoercivityEstimate coercivity_estimate(const GameSpec& spec, int n_probes, std::uint64_t seed) {
    if (n_probes < 10) throw ValidationError("coercivity_estimate needs at least 10 probes");
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;

    CoercivityEstimate est;
    double lmin = value_cap;
    for (int m = 1; m < M; ++m)
        lmin = std::min(lmin, spec.weights.log_rho_star[static_cast<std::size_t>(m)]);
    est.rho0 = expc(lmin);

    const LevelValues y0(static_cast<std::size_t>(2 * nx), 0.0);
    const LeaderControls leaders = LeaderControls::zero(spec);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    est.lower_bound = 0.0;
    for (int probe = 0; probe < n_probes; ++probe) {
        FollowerControls v = FollowerControls::zero(spec);
        double energy = 0.0;
        for (int i = 0; i < spec.followers(); ++i) {
            auto& vi = v.v[static_cast<std::size_t>(i)];
            const auto& mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
            for (int m = 1; m < M; ++m)
                for (std::int64_t p = 0; p < vi.nodes(m); ++p) {
                    auto s = vi.at(m, p, 0);
                    for (int j = 0; j < nx; ++j)
                        if (mask.in[static_cast<std::size_t>(j)])
                            s[static_cast<std::size_t>(j)] = unif(rng);
                }
            energy += expect_spacetime_inner(vi, vi, spec.grid, spec.tgrid, &mask);
        }
        if (energy <= 0.0) continue;
        const double inv = 1.0 / std::sqrt(energy);
        for (auto& vi : v.v) vi.scale(inv);

        double quad = 0.0;
        AdaptedField y_all = solve_state(spec, y0, leaders, v);
        for (int i = 0; i < spec.followers(); ++i) {
            quad += spec.beta[static_cast<std::size_t>(i)] *
                    expect_spacetime_inner(v.v[static_cast<std::size_t>(i)],
                                           v.v[static_cast<std::size_t>(i)], spec.grid, spec.tgrid,
                                           &spec.layout.mask_Gi[static_cast<std::size_t>(i)],
                                           &spec.cost_w);
            FollowerControls only_i = FollowerControls::zero(spec);
            only_i.v[static_cast<std::size_t>(i)] = v.v[static_cast<std::size_t>(i)];
            AdaptedField y_i = solve_state(spec, y0, leaders, only_i);
            double cross = 0.0;
            if (spec.scenario == Scenario::full_observation)
                cross = expect_spacetime_inner(y_all, y_i, spec.grid, spec.tgrid,
                                               &spec.layout.mask_Od);
            else
                cross = expect_spacetime_inner(y_all, y_i, spec.grid, spec.tgrid,
                                               &spec.layout.mask_Od, nullptr, 1, 1);
            quad += spec.alpha[static_cast<std::size_t>(i)] * cross;
        }
        est.lower_bound = probe == 0 ? quad : std::min(est.lower_bound, quad);
    }
    return est;
}

} // namespace nashpar
