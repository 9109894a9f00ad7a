#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nashpar/errors.hpp"
#include "nashpar/grid.hpp"
#include "nashpar/tree.hpp"

using namespace nashpar;

TEST_CASE("binary noise tree geometry") {
    const auto tg = TimeGrid::make(1.0, 3, 2);
    const auto tree = NoiseTree::make(tg);
    CHECK(tree.K == 3);
    CHECK(tree.dtW == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(tree.sqrt_dtW == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-15));
    CHECK(tree.nodes_at(0) == 1);
    CHECK(tree.nodes_at(3) == 8);
    // Even children carry the +sqrt(dtW) increment, odd children the mirror.
    CHECK(tree.increment_into(0) == tree.sqrt_dtW);
    CHECK(tree.increment_into(1) == -tree.sqrt_dtW);
    CHECK(tree.increment_into(6) == tree.sqrt_dtW);
}

TEST_CASE("conditional expectation and martingale coefficient invert branching") {
    const auto tg = TimeGrid::make(1.0, 3, 2);
    const auto tree = NoiseTree::make(tg);
    const int n_comp = 2;
    const int n_x = 4;
    const std::int64_t parents = 4;

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t parent_size = slice_size(parents, n_comp, n_x);
    LevelValues avg(parent_size);
    LevelValues coef(parent_size);
    for (auto& v : avg) v = u(rng);
    for (auto& v : coef) v = u(rng);

    LevelValues child(slice_size(2 * parents, n_comp, n_x));
    const std::size_t stride = static_cast<std::size_t>(n_comp) * n_x;
    for (std::int64_t p = 0; p < parents; ++p)
        for (std::size_t s = 0; s < stride; ++s) {
            const double a = avg[static_cast<std::size_t>(p) * stride + s];
            const double c = coef[static_cast<std::size_t>(p) * stride + s];
            child[static_cast<std::size_t>(2 * p) * stride + s] = a + c * tree.sqrt_dtW;
            child[static_cast<std::size_t>(2 * p + 1) * stride + s] = a - c * tree.sqrt_dtW;
        }

    const auto got_avg = conditional_expectation(child, parents, n_comp, n_x);
    const auto got_coef = martingale_coefficient(child, parents, n_comp, n_x, tree);
    REQUIRE(got_avg.size() == parent_size);
    REQUIRE(got_coef.size() == parent_size);
    for (std::size_t s = 0; s < parent_size; ++s) {
        CHECK(got_avg[s] == doctest::Approx(avg[s]).epsilon(1e-14));
        CHECK(got_coef[s] == doctest::Approx(coef[s]).epsilon(1e-13));
    }

    CHECK_THROWS_AS(conditional_expectation(child, parents + 1, n_comp, n_x), InvariantError);
    CHECK_THROWS_AS(martingale_coefficient(child, parents + 1, n_comp, n_x, tree),
                    InvariantError);
}

TEST_CASE("adapted field slice layout is node-major, then component") {
    const auto tg = TimeGrid::make(1.0, 2, 4);
    const auto tree = NoiseTree::make(tg);
    const int n_x = 5;
    AdaptedField f(tg, tree, 2, n_x, tg.n_steps());

    CHECK(f.level(3) == 0);
    CHECK(f.level(4) == 1);
    CHECK(f.nodes(8) == 4);

    const int m = 8;
    auto& raw = f.slice(m);
    REQUIRE(raw.size() == slice_size(4, 2, n_x));
    for (std::size_t s = 0; s < raw.size(); ++s) raw[s] = static_cast<double>(s);

    for (std::int64_t node = 0; node < 4; ++node)
        for (int c = 0; c < 2; ++c) {
            auto span = f.at(m, node, c);
            REQUIRE(span.size() == static_cast<std::size_t>(n_x));
            for (int j = 0; j < n_x; ++j)
                CHECK(span[static_cast<std::size_t>(j)] ==
                      static_cast<double>((node * 2 + c) * n_x + j));
        }

    auto whole = f.at(m, 1);
    REQUIRE(whole.size() == static_cast<std::size_t>(2 * n_x));
    CHECK(whole[0] == static_cast<double>(2 * n_x));
}

TEST_CASE("adapted field arithmetic helpers") {
    const auto tg = TimeGrid::make(1.0, 2, 2);
    const auto tree = NoiseTree::make(tg);
    AdaptedField a(tg, tree, 1, 3, tg.n_steps());
    AdaptedField b(tg, tree, 1, 3, tg.n_steps());
    a.fill(2.0);
    b.fill(-1.0);
    CHECK(a.same_shape(b));
    a.axpy(3.0, b);
    CHECK(a.max_abs() == 1.0);
    a.scale(-4.0);
    CHECK(a.at(0, 0)[0] == 4.0);
    CHECK(a.max_abs() == 4.0);

    AdaptedField c(tg, tree, 1, 4, tg.n_steps());
    CHECK_FALSE(a.same_shape(c));
    CHECK_THROWS_AS(a.axpy(1.0, c), InvariantError);
}

TEST_CASE("adapted field construction guards") {
    const auto tg = TimeGrid::make(1.0, 27, 1);
    const auto tree = NoiseTree::make(tg);
    CHECK_THROWS_AS(AdaptedField(tg, tree, 1, 3, tg.n_steps()), ValidationError);

    const auto small = TimeGrid::make(1.0, 2, 2);
    const auto small_tree = NoiseTree::make(small);
    CHECK_THROWS_AS(AdaptedField(small, small_tree, 0, 3, 4), ValidationError);
    CHECK_THROWS_AS(AdaptedField(small, small_tree, 1, 3, 99), ValidationError);
}

TEST_CASE("terminal inner product weighs leaves uniformly") {
    const auto g = SpatialGrid::make(5, 1.0);
    const std::int64_t leaves = 4;
    const int n_comp = 2;
    LevelValues a(slice_size(leaves, n_comp, g.n_x), 1.0);
    LevelValues b(slice_size(leaves, n_comp, g.n_x), 1.0);
    // (h / leaves) * 40 = 5/3 for all-ones slices.
    CHECK(expect_terminal_inner(a, b, leaves, n_comp, g) ==
          doctest::Approx(5.0 / 3.0).epsilon(1e-14));

    b[3] += 6.0;
    CHECK(expect_terminal_inner(a, b, leaves, n_comp, g) ==
          doctest::Approx(5.0 / 3.0 + g.h / 4.0 * 6.0).epsilon(1e-14));

    LevelValues wrong(7, 1.0);
    CHECK_THROWS_AS(expect_terminal_inner(a, wrong, leaves, n_comp, g), InvariantError);
}

TEST_CASE("space-time inner product uses the left endpoint rule") {
    const auto g = SpatialGrid::make(5, 1.0);
    const auto tg = TimeGrid::make(1.0, 2, 4);
    const auto tree = NoiseTree::make(tg);
    const int M = tg.n_steps();

    AdaptedField a(tg, tree, 1, g.n_x, M);
    AdaptedField b(tg, tree, 1, g.n_x, M);
    a.fill(1.0);
    b.fill(1.0);

    // sum_m dt * n_x * h = T * n_x * h; the terminal slice never enters.
    auto& last = b.slice(M);
    for (auto& v : last) v = 77.0;
    CHECK(expect_spacetime_inner(a, b, g, tg) == doctest::Approx(5.0 / 6.0).epsilon(1e-14));

    const auto mask = NodeMask::from_intervals(g, {{0.3, 0.7}});
    CHECK(expect_spacetime_inner(a, b, g, tg, &mask) == doctest::Approx(0.5).epsilon(1e-14));

    std::vector<double> tw(static_cast<std::size_t>(M) + 1, 0.0);
    for (int m = 0; m <= M; ++m) tw[static_cast<std::size_t>(m)] = static_cast<double>(m);
    // sum_m m * dt * n_x * h = dt * (5/6) * 28.
    CHECK(expect_spacetime_inner(a, b, g, tg, nullptr, &tw) ==
          doctest::Approx(tg.dt * (5.0 / 6.0) * 28.0).epsilon(1e-14));

    // Sources stop at M-1 and integrate over the same range.
    AdaptedField src(tg, tree, 1, g.n_x, M - 1);
    src.fill(1.0);
    CHECK(expect_spacetime_inner(src, src, g, tg) == doctest::Approx(5.0 / 6.0).epsilon(1e-14));

    AdaptedField two(tg, tree, 2, g.n_x, M);
    two.fill(0.0);
    for (int m = 0; m <= M; ++m)
        for (std::int64_t p = 0; p < two.nodes(m); ++p) {
            auto c1 = two.at(m, p, 1);
            for (auto& v : c1) v = 2.0;
        }
    CHECK(expect_spacetime_inner(two, two, g, tg, nullptr, nullptr, 1, 1) ==
          doctest::Approx(4.0 * 5.0 / 6.0).epsilon(1e-14));
    CHECK_THROWS_AS(expect_spacetime_inner(two, a, g, tg), InvariantError);
    CHECK_THROWS_AS(expect_spacetime_inner(two, a, g, tg, nullptr, nullptr, 0, -1),
                    InvariantError);
}
