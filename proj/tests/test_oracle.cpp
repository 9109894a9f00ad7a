#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "nashpar/errors.hpp"
#include "nashpar/oracle.hpp"

using namespace nashpar;

namespace {

GameSpec make_spec(Scenario sc) {
    GameSpec s;
    s.grid = SpatialGrid::make(5, 1.0);
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

void randomize(AdaptedField& f, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int m = 0; m <= f.last_index(); ++m)
        for (auto& v : f.slice(m)) v = u(rng);
}

double vgap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / (1.0 + a.cwiseAbs().maxCoeff());
}

} // namespace

TEST_CASE("stacked dimensions and index maps") {
    const auto inst = assemble(make_spec(Scenario::full_observation));
    CHECK(inst.traj_dim == 280);
    CHECK(inst.src_dim == 240);
    CHECK(inst.src1_dim == 120);
    CHECK(inst.noise_dim == 30);
    CHECK(inst.term_dim == 40);
    CHECK(inst.c_term == doctest::Approx((1.0 / 6.0) / 4.0).epsilon(1e-15));

    CHECK(inst.traj_index(0, 0, 0, 0) == 0);
    CHECK(inst.traj_index(0, 0, 1, 2) == 7);
    CHECK(inst.traj_index(8, 1, 0, 0) == inst.traj_off[8] + 10);
    CHECK(inst.src1_index(1, 0, 3) == inst.src1_off[1] + 3);
    CHECK(inst.noise_off[0] == -1);
    CHECK(inst.noise_off[7] == 0);
    CHECK(inst.noise_index(15, 1, 1, 0) == inst.noise_off[15] + 15);
}

TEST_CASE("dense forward and backward compositions match the sweeps") {
    const auto spec = make_spec(Scenario::full_observation);
    const auto inst = assemble(spec);
    const int M = spec.tgrid.n_steps();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    LevelValues y0(2 * 5);
    for (auto& v : y0) v = u(rng);
    auto leaders = LeaderControls::zero(spec);
    randomize(leaders.u1, rng);
    randomize(leaders.u2, rng);
    randomize(leaders.u3, rng);
    auto followers = FollowerControls::zero(spec);
    for (auto& vi : followers.v) randomize(vi, rng);

    const auto y_field = solve_state(spec, y0, leaders, followers);
    const auto y_dense = dense_state(inst, y0, leaders, followers);
    CHECK(vgap(pack_trajectory(inst, y_field), y_dense) <= 1e-11);

    AdaptedField r(spec.tgrid, spec.tree, 2, 5, M - 1);
    randomize(r, rng);
    LevelValues zT(slice_size(4, 2, 5));
    for (auto& v : zT) v = u(rng);

    SourceSpec bsrc;
    bsrc.drift = &r;
    const auto bw = backward_sweep(spec.context(), bsrc, 2, zT);
    const auto db = dense_backward(inst, zT, pack_source(inst, r));
    CHECK(vgap(pack_trajectory(inst, bw.z), db.z) <= 1e-11);
    CHECK(vgap(pack_source(inst, bw.w), db.w) <= 1e-11);
}

TEST_CASE("backward operators are the metric transposes of the forward ones") {
    const auto inst = assemble(make_spec(Scenario::full_observation));
    const auto n_src = inst.src_dim;
    const auto n_term = inst.term_dim;
    const double h = inst.spec.grid.h;

    const Eigen::MatrixXd lhs1 = inst.d_src.asDiagonal() * inst.B_r_w;
    const Eigen::MatrixXd rhs1 =
        inst.T_f.topRows(n_src).transpose() * inst.d_src.asDiagonal();
    CHECK((lhs1 - rhs1).cwiseAbs().maxCoeff() <= 1e-13);

    const Eigen::MatrixXd lhs2 = inst.d_noise.asDiagonal() * inst.B_r_Zc;
    const Eigen::MatrixXd rhs2 =
        inst.T_g.topRows(n_src).transpose() * inst.d_src.asDiagonal();
    CHECK((lhs2 - rhs2).cwiseAbs().maxCoeff() <= 1e-13);

    const Eigen::MatrixXd lhs3 = inst.d_src.asDiagonal() * inst.B_zT_w;
    const Eigen::MatrixXd rhs3 = inst.c_term * inst.T_f.bottomRows(n_term).transpose();
    CHECK((lhs3 - rhs3).cwiseAbs().maxCoeff() <= 1e-13);

    const Eigen::MatrixXd lhs4 = h * inst.B_zT_z.topRows(10);
    const Eigen::MatrixXd rhs4 = inst.c_term * inst.T_y0.bottomRows(n_term).transpose();
    CHECK((lhs4 - rhs4).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("direct game solve agrees with both iterative equilibria") {
    for (auto sc : {Scenario::full_observation, Scenario::second_component}) {
        const auto spec = make_spec(sc);
        const auto inst = assemble(spec);
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        LevelValues y0(2 * 5);
        for (auto& v : y0) v = u(rng);
        auto leaders = LeaderControls::zero(spec);
        randomize(leaders.u1, rng);

        const auto dn = solve_dense_nash(inst, y0, leaders);
        const auto fp = solve_nash_fixed_point(spec, y0, leaders);
        const auto ad = nash_from_adjoint(spec, y0, leaders);

        for (int i = 0; i < 2; ++i) {
            auto d1 = dn.v[static_cast<std::size_t>(i)];
            d1.axpy(-1.0, fp.v_star.v[static_cast<std::size_t>(i)]);
            auto d2 = dn.v[static_cast<std::size_t>(i)];
            d2.axpy(-1.0, ad.v_star.v[static_cast<std::size_t>(i)]);
            const double ref = 1.0 + dn.v[static_cast<std::size_t>(i)].max_abs();
            CHECK(d1.max_abs() / ref <= 1e-8);
            CHECK(d2.max_abs() / ref <= 1e-8);
        }
        const auto res = nash_residual(spec, y0, leaders, dn);
        for (double r : res) CHECK(r <= 1e-9);
    }
}

TEST_CASE("dense coupled adjoint matches the fixed point") {
    const auto spec = make_spec(Scenario::full_observation);
    const auto inst = assemble(spec);
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LevelValues phiT(slice_size(4, 2, 5));
    for (auto& v : phiT) v = u(rng);

    const auto adj = solve_coupled_adjoint(spec, phiT);
    const auto da = dense_coupled_adjoint(inst, phiT);
    CHECK(vgap(pack_trajectory(inst, adj.phi), da.phi) <= 1e-9);
    CHECK(vgap(pack_source(inst, adj.w_phi), da.w) <= 1e-9);
    REQUIRE(da.psi.size() == 2);
    for (int i = 0; i < 2; ++i)
        CHECK(vgap(pack_trajectory(inst, adj.psi[static_cast<std::size_t>(i)]),
                   da.psi[static_cast<std::size_t>(i)]) <= 1e-9);
}

TEST_CASE("gramian matrix is symmetric and positive semidefinite") {
    for (auto sc : {Scenario::full_observation, Scenario::second_component}) {
        const auto inst = assemble(make_spec(sc));
        const Eigen::MatrixXd G = dense_gramian(inst);
        REQUIRE(G.rows() == 40);
        CHECK((G - G.transpose()).cwiseAbs().maxCoeff() <= 1e-10);

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (G + G.transpose()));
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);
        CHECK(es.eigenvalues().maxCoeff() > 0.0);
    }
}

TEST_CASE("spectral synthesis agrees with the conjugate gradient solver") {
    for (auto sc : {Scenario::full_observation, Scenario::second_component}) {
        const auto spec = make_spec(sc);
        const auto inst = assemble(spec);
        std::mt19937_64 rng(77);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        LevelValues y0(2 * 5);
        for (auto& v : y0) v = u(rng);

        const double eps = 1e-2;
        const auto dh = solve_dense_hum(inst, y0, eps);
        HumParams params;
        params.epsilon = eps;
        params.cg_tol = 1e-12;
        params.cg_max_iter = 500;
        const auto hum = solve_leader(spec, y0, params);

        REQUIRE(dh.phiT_star.size() == hum.phiT_star.size());
        double gap = 0.0, ref = 0.0;
        for (std::size_t k = 0; k < dh.phiT_star.size(); ++k) {
            gap = std::max(gap, std::abs(dh.phiT_star[k] - hum.phiT_star[k]));
            ref = std::max(ref, std::abs(dh.phiT_star[k]));
        }
        CHECK(gap / (1.0 + ref) <= 1e-7);
        CHECK(std::abs(dh.predicted_terminal_norm - hum.terminal_norm) /
                  (1.0 + hum.terminal_norm) <=
              1e-9);
        CHECK(dh.min_gramian_eig >= 0.0);
        CHECK(dh.max_gramian_eig > 0.0);
    }
}

TEST_CASE("dense observability forms are positive on small instances") {
    for (auto sc : {Scenario::full_observation, Scenario::second_component}) {
        const auto rep = dense_observability(make_spec(sc));
        CHECK(rep.min_gramian_eig > 0.0);
        CHECK(std::isfinite(rep.max_ratio));
        CHECK(rep.max_ratio > 0.0);
    }
}

TEST_CASE("assembly guards") {
    SUBCASE("unknown cap") {
        auto big = make_spec(Scenario::full_observation);
        CHECK_THROWS_AS(assemble(big, 100), ValidationError);
    }
    SUBCASE("finalize must run first") {
        auto raw = make_spec(Scenario::full_observation);
        raw.cost_w.clear();
        CHECK_THROWS_AS(assemble(raw), InvariantError);
    }
    SUBCASE("shape errors") {
        const auto spec = make_spec(Scenario::full_observation);
        const auto inst = assemble(spec);
        CHECK_THROWS_AS(dense_state(inst, LevelValues(3, 0.0), LeaderControls::zero(spec),
                                    FollowerControls::zero(spec)),
                        ValidationError);
        AdaptedField one_comp(spec.tgrid, spec.tree, 1, 5, spec.tgrid.n_steps() - 1);
        one_comp.fill(0.0);
        CHECK_THROWS_AS(pack_source(inst, one_comp), InvariantError);
    }
}
