#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "nashpar/errors.hpp"
#include "nashpar/exec.hpp"
#include "nashpar/grid.hpp"
#include "nashpar/sweep.hpp"
#include "nashpar/tree.hpp"

using namespace nashpar;

namespace {

struct Lab {
    SpatialGrid grid;
    TimeGrid tgrid;
    NoiseTree tree;
    DiffusionStencil st;
    CouplingField A;
    SweepContext ctx;

    Lab(int n_x, int K, int R, double a11, double a12, double a21, double a22)
        : grid(SpatialGrid::make(n_x, 1.0)),
          tgrid(TimeGrid::make(1.0, K, R)),
          tree(NoiseTree::make(tgrid)),
          st(DiffusionStencil::make(grid, tgrid)),
          A(CouplingField::constant(a11, a12, a21, a22, tgrid.n_steps(), n_x)) {
        ctx.A = &A;
        ctx.st = &st;
        ctx.grid = &grid;
        ctx.tgrid = &tgrid;
        ctx.tree = &tree;
        ctx.exec = ExecPolicy::sequential();
    }
};

void randomize(AdaptedField& f, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int m = 0; m <= f.last_index(); ++m)
        for (auto& v : f.slice(m)) v = u(rng);
}

} // namespace

TEST_CASE("implicit heat step damps discrete sine modes exactly") {
    const auto grid = SpatialGrid::make(9, 1.0);
    const auto tgrid = TimeGrid::make(0.1, 1, 10);
    const auto st = DiffusionStencil::make(grid, tgrid);
    CHECK(st.off == doctest::Approx(-tgrid.dt / (grid.h * grid.h)).epsilon(1e-15));

    const double pi = std::numbers::pi;
    for (int k = 1; k <= 3; ++k) {
        std::vector<double> v(9);
        for (int j = 0; j < 9; ++j) v[static_cast<std::size_t>(j)] = std::sin(pi * k * grid.nodes[static_cast<std::size_t>(j)]);
        const double s = std::sin(0.5 * pi * k * grid.h);
        const double damp = 1.0 / (1.0 + tgrid.dt * 4.0 * s * s / (grid.h * grid.h));
        auto x = v;
        st.solve_in_place(x.data());
        for (int j = 0; j < 9; ++j)
            CHECK(x[static_cast<std::size_t>(j)] ==
                  doctest::Approx(damp * v[static_cast<std::size_t>(j)]).epsilon(1e-12));
    }
}

TEST_CASE("apply is the inverse of solve_in_place") {
    const auto grid = SpatialGrid::make(17, 2.0);
    const auto tgrid = TimeGrid::make(1.0, 2, 8);
    const auto st = DiffusionStencil::make(grid, tgrid);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(17), back(17);
    for (auto& v : x) v = u(rng);
    auto y = x;
    st.solve_in_place(y.data());
    st.apply(y.data(), back.data());
    for (int j = 0; j < 17; ++j)
        CHECK(back[static_cast<std::size_t>(j)] ==
              doctest::Approx(x[static_cast<std::size_t>(j)]).epsilon(1e-13));
}

TEST_CASE("coupling field helpers") {
    auto A = CouplingField::constant(1.0, -2.0, 3.0, 4.0, 4, 3);
    CHECK(A.at(0, 1, 2, 1) == -2.0);
    CHECK(A.norm_inf() == 7.0);
    CHECK(A.finite());
    A.a[1][0] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(A.finite());
}

TEST_CASE("sign condition on the coupling block") {
    const auto grid = SpatialGrid::make(9, 1.0);
    const auto mask = NodeMask::from_intervals(grid, {{0.45, 0.55}});
    auto A = CouplingField::constant(0.4, -0.3, 8.0, -0.2, 4, 9);
    CHECK_NOTHROW(A.require_sign_condition(mask, 0.5));
    CHECK_THROWS_AS(A.require_sign_condition(mask, 0.0), ValidationError);

    auto weak = CouplingField::constant(0.4, -0.3, 0.3, -0.2, 4, 9);
    CHECK_THROWS_AS(weak.require_sign_condition(mask, 0.5), ValidationError);

    auto flip = A;
    flip.a[2][2 * 9 + 4] = -8.0; // a21 at m = 2 on the masked node
    CHECK_THROWS_AS(flip.require_sign_condition(mask, 0.5), ValidationError);
}

TEST_CASE("branch step splits the tree with mirrored noise increments") {
    Lab lab(5, 2, 4, 0.4, -0.3, 0.8, -0.2);
    const int M = lab.tgrid.n_steps();
    std::mt19937_64 rng(7);

    AdaptedField g0(lab.tgrid, lab.tree, 1, 5, M - 1);
    AdaptedField g1(lab.tgrid, lab.tree, 1, 5, M - 1);
    randomize(g0, rng);
    randomize(g1, rng);
    SourceSpec src;
    src.noise = {&g0, &g1};

    LevelValues y0(2 * 5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : y0) v = u(rng);

    const auto y = forward_sweep(lab.ctx, src, 2, y0);
    const int mb = lab.tgrid.branch_step_of_level(0);
    REQUIRE(y.nodes(mb) == 1);
    REQUIRE(y.nodes(mb + 1) == 2);
    const double sq = lab.tree.sqrt_dtW;
    for (int c = 0; c < 2; ++c) {
        const auto& g = (c == 0) ? g0 : g1;
        auto up = y.at(mb + 1, 0, c);
        auto dn = y.at(mb + 1, 1, c);
        auto gs = g.at(mb, 0, 0);
        for (int j = 0; j < 5; ++j) {
            // Children differ by exactly twice the scaled noise source.
            CHECK(up[static_cast<std::size_t>(j)] - dn[static_cast<std::size_t>(j)] ==
                  doctest::Approx(2.0 * sq * gs[static_cast<std::size_t>(j)]).epsilon(1e-13));
        }
    }
}

TEST_CASE("localized sources gate by mask, gain and time weight") {
    Lab lab(5, 1, 4, 0.0, 0.0, 0.0, 0.0);
    const int M = lab.tgrid.n_steps();
    std::mt19937_64 rng(13);

    AdaptedField vfield(lab.tgrid, lab.tree, 2, 5, M - 1);
    randomize(vfield, rng);
    std::vector<double> tw(static_cast<std::size_t>(M) + 1);
    for (int m = 0; m <= M; ++m) tw[static_cast<std::size_t>(m)] = 1.0 + 0.1 * m;

    const auto mask = NodeMask::from_intervals(lab.grid, {{0.3, 0.7}});
    SourceSpec src;
    src.localized.push_back({mask, 0, &vfield, 1, 0.8, &tw});

    LevelValues zero(2 * 5, 0.0);
    LevelValues next;
    forward_step(lab.ctx, src, 2, 0, zero, next);

    // With A = 0 and y = 0 the step reduces to dt * L^{-1}(localized source).
    LevelValues manual(2 * 5, 0.0);
    for (int j = 0; j < 5; ++j)
        if (mask.contains(j))
            manual[static_cast<std::size_t>(j)] =
                lab.tgrid.dt * 0.8 * tw[0] * vfield.at(0, 0, 1)[static_cast<std::size_t>(j)];
    lab.st.solve_in_place(manual.data());
    for (int j = 0; j < 5; ++j) {
        CHECK(next[static_cast<std::size_t>(j)] ==
              doctest::Approx(manual[static_cast<std::size_t>(j)]).epsilon(1e-14));
        CHECK(next[static_cast<std::size_t>(5 + j)] == 0.0);
    }
}

TEST_CASE("backward systems reject noise sources") {
    Lab lab(5, 2, 4, 0.4, -0.3, 0.8, -0.2);
    AdaptedField g(lab.tgrid, lab.tree, 1, 5, lab.tgrid.n_steps() - 1);
    g.fill(1.0);
    SourceSpec src;
    src.noise[0] = &g;
    LevelValues zT(slice_size(4, 2, 5), 1.0);
    CHECK_THROWS_AS(backward_sweep(lab.ctx, src, 2, zT), InvariantError);
}

TEST_CASE("forward and backward sweeps are exact transposes") {
    Lab lab(7, 2, 4, 0.4, -0.3, 0.8, -0.2);
    const int M = lab.tgrid.n_steps();
    const int n_x = lab.grid.n_x;
    const auto maskf = NodeMask::from_intervals(lab.grid, {{0.3, 0.7}});
    const auto maskb = NodeMask::from_intervals(lab.grid, {{0.1, 0.4}});

    std::vector<double> twf(static_cast<std::size_t>(M) + 1), twb(twf.size());
    for (int m = 0; m <= M; ++m) {
        twf[static_cast<std::size_t>(m)] = 1.0 + 0.05 * m;
        twb[static_cast<std::size_t>(m)] = 2.0 - 0.1 * m;
    }

    double worst = 0.0;
    for (unsigned probe = 0; probe < 20; ++probe) {
        std::mt19937_64 rng(1000 + probe);
        std::uniform_real_distribution<double> u(-1.0, 1.0);

        AdaptedField f(lab.tgrid, lab.tree, 2, n_x, M - 1);
        AdaptedField g0(lab.tgrid, lab.tree, 1, n_x, M - 1);
        AdaptedField g1(lab.tgrid, lab.tree, 1, n_x, M - 1);
        AdaptedField locf(lab.tgrid, lab.tree, 2, n_x, M - 1);
        AdaptedField r(lab.tgrid, lab.tree, 2, n_x, M - 1);
        AdaptedField locb(lab.tgrid, lab.tree, 1, n_x, M - 1);
        randomize(f, rng);
        randomize(g0, rng);
        randomize(g1, rng);
        randomize(locf, rng);
        randomize(r, rng);
        randomize(locb, rng);

        LevelValues y0(2 * static_cast<std::size_t>(n_x));
        for (auto& v : y0) v = u(rng);
        LevelValues zT(slice_size(4, 2, n_x));
        for (auto& v : zT) v = u(rng);

        SourceSpec fsrc;
        fsrc.drift = &f;
        fsrc.noise = {&g0, &g1};
        fsrc.localized.push_back({maskf, 0, &locf, 1, 0.8, &twf});

        SourceSpec bsrc;
        bsrc.drift = &r;
        bsrc.localized.push_back({maskb, 1, &locb, 0, -0.6, &twb});

        const auto y = forward_sweep(lab.ctx, fsrc, 2, y0);
        const auto bw = backward_sweep(lab.ctx, bsrc, 2, zT);

        const double lhs = expect_terminal_inner(y.slice(M), zT, 4, 2, lab.grid);

        double z0 = 0.0;
        for (std::size_t s = 0; s < y0.size(); ++s) z0 += y0[s] * bw.z.slice(0)[s];
        z0 *= lab.grid.h;

        const double pair_f = expect_spacetime_inner(f, bw.w, lab.grid, lab.tgrid) +
                              0.8 * expect_spacetime_inner(locf, bw.w, lab.grid, lab.tgrid,
                                                           &maskf, &twf, 1, 0);
        const double pair_g = expect_noise_inner(g0, bw.Zc, lab.grid, lab.tgrid, 0, 0) +
                              expect_noise_inner(g1, bw.Zc, lab.grid, lab.tgrid, 0, 1);
        const double pair_r = expect_spacetime_inner(y, r, lab.grid, lab.tgrid) -
                              0.6 * expect_spacetime_inner(y, locb, lab.grid, lab.tgrid,
                                                           &maskb, &twb, 1, 0);

        const double rhs = z0 + pair_f + pair_g - pair_r;
        const double scale = std::max({1.0, std::abs(lhs), std::abs(z0), std::abs(pair_f),
                                       std::abs(pair_g), std::abs(pair_r)});
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("threaded sweeps match the sequential reference bit for bit") {
    Lab lab(9, 3, 4, 0.4, -0.3, 0.8, -0.2);
    const int M = lab.tgrid.n_steps();
    std::mt19937_64 rng(42);

    AdaptedField f(lab.tgrid, lab.tree, 2, 9, M - 1);
    AdaptedField g0(lab.tgrid, lab.tree, 1, 9, M - 1);
    randomize(f, rng);
    randomize(g0, rng);
    SourceSpec src;
    src.drift = &f;
    src.noise[0] = &g0;

    LevelValues y0(2 * 9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : y0) v = u(rng);

    const auto y_seq = forward_sweep(lab.ctx, src, 2, y0);
    auto par = lab.ctx;
    par.exec = ExecPolicy::with_threads(4);
    const auto y_par = forward_sweep(par, src, 2, y0);

    auto diff = y_par;
    diff.axpy(-1.0, y_seq);
    CHECK(diff.max_abs() == 0.0);

    LevelValues zT(slice_size(8, 2, 9));
    for (auto& v : zT) v = u(rng);
    SourceSpec empty;
    const auto b_seq = backward_sweep(lab.ctx, empty, 2, zT);
    const auto b_par = backward_sweep(par, empty, 2, zT);
    auto dz = b_par.z;
    dz.axpy(-1.0, b_seq.z);
    auto dw = b_par.w;
    dw.axpy(-1.0, b_seq.w);
    CHECK(dz.max_abs() == 0.0);
    CHECK(dw.max_abs() == 0.0);
}
