#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "nashpar/errors.hpp"
#include "nashpar/hum.hpp"
#include "nashpar/nash.hpp"

using namespace nashpar;

namespace {

GameSpec make_spec(Scenario sc) {
    GameSpec s;
    s.grid = SpatialGrid::make(9, 1.0);
    s.tgrid = TimeGrid::make(1.0, 2, 8);
    s.tree = NoiseTree::make(s.tgrid);
    s.layout.mask_G0 = NodeMask::from_intervals(s.grid, {{0.3, 0.7}});
    s.layout.mask_Od = NodeMask::from_intervals(s.grid, {{0.3, 0.9}});
    s.layout.mask_O0 = NodeMask::from_intervals(s.grid, {{0.45, 0.55}});
    s.layout.mask_Gi = {NodeMask::from_intervals(s.grid, {{0.1, 0.2}}),
                        NodeMask::from_intervals(s.grid, {{0.8, 0.9}})};
    const int M = s.tgrid.n_steps();
    s.coeffs = CouplingField::constant(0.4, -0.3, 8.0, -0.2, M, s.grid.n_x);
    s.a0 = 0.5;
    s.alpha = {1.0, 1.0};
    s.beta = {100.0, 100.0};
    s.scenario = sc;
    s.picard_tol = 1e-12;
    const std::vector<std::pair<double, double>> tv = {{0.3, 0.2}, {-0.25, 0.15}};
    for (const auto& [c1, c2] : tv) {
        AdaptedField t(s.tgrid, s.tree, 2, s.grid.n_x, M - 1);
        for (int m = 0; m < M; ++m)
            for (std::int64_t p = 0; p < t.nodes(m); ++p) {
                auto t1 = t.at(m, p, 0);
                auto t2 = t.at(m, p, 1);
                for (int j = 0; j < s.grid.n_x; ++j) {
                    t1[static_cast<std::size_t>(j)] = c1;
                    t2[static_cast<std::size_t>(j)] = c2;
                }
            }
        s.targets.push_back(std::move(t));
    }
    s.wparams = build_eta0(s.grid, s.layout, 0.1, 0.5);
    s.weights = build_weight_tables(s.wparams, s.grid, s.tgrid);
    s.stencil = DiffusionStencil::make(s.grid, s.tgrid);
    s.exec = ExecPolicy::sequential();
    s.finalize();
    s.validate();
    return s;
}

LevelValues demo_y0(const GameSpec& spec) {
    LevelValues y0(2 * static_cast<std::size_t>(spec.grid.n_x));
    for (int j = 0; j < spec.grid.n_x; ++j) {
        const double x = spec.grid.nodes[static_cast<std::size_t>(j)];
        y0[static_cast<std::size_t>(j)] = std::sin(3.14159265358979323846 * x);
        y0[static_cast<std::size_t>(spec.grid.n_x + j)] = x * (1.0 - x);
    }
    return y0;
}

double kinner(const GameSpec& spec, const LevelValues& a, const LevelValues& b) {
    return expect_terminal_inner(a, b, spec.tree.nodes_at(spec.tree.K), 2, spec.grid);
}

} // namespace

TEST_CASE("duality gramian is symmetric and positive in the terminal product") {
    const auto spec = make_spec(Scenario::full_observation);
    const std::size_t n = 4 * 2 * 9;
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    for (int probe = 0; probe < 3; ++probe) {
        LevelValues phi(n), psi(n);
        for (auto& v : phi) v = u(rng);
        for (auto& v : psi) v = u(rng);
        const auto gphi = gramian_apply(spec, phi);
        const auto gpsi = gramian_apply(spec, psi);
        const double lhs = kinner(spec, gphi, psi);
        const double rhs = kinner(spec, phi, gpsi);
        CHECK(std::abs(lhs - rhs) / (1.0 + std::abs(lhs)) <= 1e-12);
        CHECK(kinner(spec, gphi, phi) >= 0.0);
    }
}

TEST_CASE("penalized leader synthesis closes the loop") {
    for (auto sc : {Scenario::full_observation, Scenario::second_component}) {
        const auto spec = make_spec(sc);
        const auto y0 = demo_y0(spec);
        HumParams params;
        params.epsilon = 1e-2;
        params.cg_tol = 1e-10;
        params.cg_max_iter = 400;

        const auto hum = solve_leader(spec, y0, params);
        const double scale = data_scale(spec, y0, hum.leaders);

        // || y(T) + eps phiT* || is the CG stopping contract.
        CHECK(hum.identity_residual <= 10.0 * params.cg_tol * scale);
        CHECK(hum.terminal_norm > 0.0);
        CHECK(hum.J_value >= 0.0);
        CHECK(hum.cg_iterations >= 1);

        // The followers respond optimally to the synthesized leaders.
        const auto res = nash_residual(spec, y0, hum.leaders, hum.followers);
        for (double r : res) CHECK(r <= 1e-8);
    }
}

TEST_CASE("leader controls are read off the coupled adjoint") {
    const auto spec = make_spec(Scenario::full_observation);
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LevelValues phiT(4 * 2 * 9);
    for (auto& v : phiT) v = u(rng);

    const auto adj = solve_coupled_adjoint(spec, phiT);
    const auto lead = extract_leader_controls(spec, adj);
    const int M = spec.tgrid.n_steps();

    for (int m = 0; m < M; ++m)
        for (std::int64_t p = 0; p < lead.u1.nodes(m); ++p) {
            auto u1 = lead.u1.at(m, p, 0);
            auto w1 = adj.w_phi.at(m, p, 0);
            for (int j = 0; j < 9; ++j) {
                const double want = spec.layout.mask_G0.contains(j)
                                        ? w1[static_cast<std::size_t>(j)]
                                        : 0.0;
                CHECK(u1[static_cast<std::size_t>(j)] == want);
            }
        }

    const int mb = spec.tgrid.branch_step_of_level(0);
    for (std::int64_t p = 0; p < lead.u2.nodes(mb); ++p)
        for (int j = 0; j < 9; ++j) {
            CHECK(lead.u2.at(mb, p, 0)[static_cast<std::size_t>(j)] ==
                  adj.Phi.at(mb, p, 0)[static_cast<std::size_t>(j)]);
            CHECK(lead.u3.at(mb, p, 0)[static_cast<std::size_t>(j)] ==
                  adj.Phi.at(mb, p, 1)[static_cast<std::size_t>(j)]);
        }
}

TEST_CASE("epsilon sweep validates its ladder") {
    const auto spec = make_spec(Scenario::full_observation);
    const auto y0 = demo_y0(spec);
    HumParams params;
    CHECK_THROWS_WITH_AS(epsilon_sweep(spec, y0, {1e-2, 1e-3}, params),
                         "epsilon ladder needs at least 3 entries", ValidationError);
    CHECK_THROWS_WITH_AS(epsilon_sweep(spec, y0, {1e-2, 1e-3, 0.0}, params),
                         "epsilon ladder entries must be positive", ValidationError);
    CHECK_THROWS_WITH_AS(epsilon_sweep(spec, y0, {1e-2, 1e-2, 1e-3}, params),
                         "epsilon ladder must be strictly decreasing", ValidationError);
}

TEST_CASE("hum parameter validation") {
    const auto spec = make_spec(Scenario::full_observation);
    const auto y0 = demo_y0(spec);
    HumParams p;
    p.epsilon = 0.0;
    CHECK_THROWS_AS(solve_leader(spec, y0, p), ValidationError);
    p.epsilon = 1e-2;
    p.cg_tol = 0.5;
    CHECK_THROWS_AS(solve_leader(spec, y0, p), ValidationError);
    p.cg_tol = 1e-8;
    p.cg_max_iter = 0;
    CHECK_THROWS_AS(solve_leader(spec, y0, p), ValidationError);
}

TEST_CASE("zero data drives zero controls") {
    auto spec = with_zero_targets(make_spec(Scenario::full_observation));
    const LevelValues y0(2 * 9, 0.0);
    HumParams params;
    params.epsilon = 1e-2;
    params.cg_tol = 1e-10;

    const auto hum = solve_leader(spec, y0, params);
    CHECK(hum.terminal_norm == 0.0);
    CHECK(hum.J_value == 0.0);
    CHECK(hum.leaders.norm(spec) == 0.0);

    const auto sweep = epsilon_sweep(spec, y0, {1e-1, 1e-2, 1e-3}, params);
    REQUIRE(sweep.rows.size() == 3);
    for (const auto& row : sweep.rows) {
        CHECK(row.terminal_norm == 0.0);
        CHECK(row.u1_norm == 0.0);
        CHECK(row.J == 0.0);
    }
    CHECK(sweep.max_control_norm == 0.0);
}

TEST_CASE("observability report in both modes") {
    for (auto sc : {Scenario::full_observation, Scenario::second_component}) {
        const auto spec = make_spec(sc);

        const auto dense = observability_rayleigh(spec, 0, ObservabilityMode::dense, 0);
        CHECK(dense.min_gramian_eig > 0.0);
        CHECK(std::isfinite(dense.max_ratio));
        CHECK(dense.max_ratio > 0.0);

        const auto sampled = observability_rayleigh(spec, 25, ObservabilityMode::sampled, 5);
        CHECK(sampled.n_probes == 25);
        CHECK(std::isfinite(sampled.max_ratio));
        // Rayleigh quotients sit inside the dense spectral bounds.
        CHECK(sampled.max_ratio <= dense.max_ratio * (1.0 + 1e-9));
        CHECK(sampled.min_gramian_eig >= dense.min_gramian_eig * (1.0 - 1e-9));

        LevelValues zero(4 * 2 * 9, 0.0);
        CHECK_THROWS_AS(observability_ratio(spec, zero), ValidationError);
    }
    const auto spec = make_spec(Scenario::full_observation);
    CHECK_THROWS_AS(observability_rayleigh(spec, 0, ObservabilityMode::sampled, 0),
                    ValidationError);
}
