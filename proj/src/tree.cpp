#include "nashpar/tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nashpar/errors.hpp"

namespace nashpar {

NoiseTree NoiseTree::make(const TimeGrid& tgrid) {
    NoiseTree t;
    t.K = tgrid.K;
    t.dtW = tgrid.dtW;
    t.sqrt_dtW = std::sqrt(tgrid.dtW);
    return t;
}

LevelValues conditional_expectation(const LevelValues& child_level, std::int64_t parent_nodes,
                                    int n_comp, int n_x) {
    const std::size_t stride = static_cast<std::size_t>(n_comp) * static_cast<std::size_t>(n_x);
    if (child_level.size() != slice_size(2 * parent_nodes, n_comp, n_x))
        throw InvariantError("conditional_expectation: child level size mismatch");
    LevelValues out(slice_size(parent_nodes, n_comp, n_x));
    for (std::int64_t p = 0; p < parent_nodes; ++p) {
        const double* up = child_level.data() + static_cast<std::size_t>(2 * p) * stride;
        const double* dn = child_level.data() + static_cast<std::size_t>(2 * p + 1) * stride;
        double* o = out.data() + static_cast<std::size_t>(p) * stride;
        for (std::size_t j = 0; j < stride; ++j) o[j] = 0.5 * (up[j] + dn[j]);
    }
    return out;
}

LevelValues martingale_coefficient(const LevelValues& child_level, std::int64_t parent_nodes,
                                   int n_comp, int n_x, const NoiseTree& tree) {
    const std::size_t stride = static_cast<std::size_t>(n_comp) * static_cast<std::size_t>(n_x);
    if (child_level.size() != slice_size(2 * parent_nodes, n_comp, n_x))
        throw InvariantError("martingale_coefficient: child level size mismatch");
    LevelValues out(slice_size(parent_nodes, n_comp, n_x));
    const double inv = 1.0 / (2.0 * tree.sqrt_dtW);
    for (std::int64_t p = 0; p < parent_nodes; ++p) {
        const double* up = child_level.data() + static_cast<std::size_t>(2 * p) * stride;
        const double* dn = child_level.data() + static_cast<std::size_t>(2 * p + 1) * stride;
        double* o = out.data() + static_cast<std::size_t>(p) * stride;
        for (std::size_t j = 0; j < stride; ++j) o[j] = (up[j] - dn[j]) * inv;
    }
    return out;
}

AdaptedField::AdaptedField(const TimeGrid& tgrid, const NoiseTree& tree, int n_comp, int n_x,
                           int last_index)
    : n_comp_(n_comp), n_x_(n_x), R_(tgrid.R), last_index_(last_index) {
    if (n_comp < 1 || n_x < 1) throw ValidationError("AdaptedField: component/space counts must be positive");
    if (last_index < 0 || last_index > tgrid.n_steps())
        throw ValidationError("AdaptedField: last index out of range");
    std::int64_t total = 0;
    for (int m = 0; m <= last_index; ++m)
        total += (std::int64_t{1} << (m / R_)) * n_comp * n_x;
    if (total > max_total_scalars)
        throw ValidationError("AdaptedField: tree storage budget exceeded; reduce K or the grid size");
    (void)tree;
    slices_.resize(static_cast<std::size_t>(last_index) + 1);
    for (int m = 0; m <= last_index; ++m)
        slices_[static_cast<std::size_t>(m)].assign(slice_size(nodes(m), n_comp, n_x), 0.0);
}

std::span<double> AdaptedField::at(int m, std::int64_t node) {
    const std::size_t stride = static_cast<std::size_t>(n_comp_) * static_cast<std::size_t>(n_x_);
    return {slices_[static_cast<std::size_t>(m)].data() + static_cast<std::size_t>(node) * stride,
            stride};
}

std::span<const double> AdaptedField::at(int m, std::int64_t node) const {
    const std::size_t stride = static_cast<std::size_t>(n_comp_) * static_cast<std::size_t>(n_x_);
    return {slices_[static_cast<std::size_t>(m)].data() + static_cast<std::size_t>(node) * stride,
            stride};
}

std::span<double> AdaptedField::at(int m, std::int64_t node, int comp) {
    auto s = at(m, node);
    return s.subspan(static_cast<std::size_t>(comp) * static_cast<std::size_t>(n_x_),
                     static_cast<std::size_t>(n_x_));
}

std::span<const double> AdaptedField::at(int m, std::int64_t node, int comp) const {
    auto s = at(m, node);
    return s.subspan(static_cast<std::size_t>(comp) * static_cast<std::size_t>(n_x_),
                     static_cast<std::size_t>(n_x_));
}

void AdaptedField::fill(double v) {
    for (auto& s : slices_) std::fill(s.begin(), s.end(), v);
}

bool AdaptedField::same_shape(const AdaptedField& o) const {
    return n_comp_ == o.n_comp_ && n_x_ == o.n_x_ && R_ == o.R_ && last_index_ == o.last_index_;
}

double AdaptedField::max_abs() const {
    double m = 0.0;
    for (const auto& s : slices_)
        for (double v : s) m = std::max(m, std::abs(v));
    return m;
}

void AdaptedField::axpy(double s, const AdaptedField& other) {
    if (!same_shape(other)) throw InvariantError("AdaptedField::axpy: shape mismatch");
    for (std::size_t m = 0; m < slices_.size(); ++m) {
        auto& a = slices_[m];
        const auto& b = other.slices_[m];
        for (std::size_t j = 0; j < a.size(); ++j) a[j] += s * b[j];
    }
}

void AdaptedField::scale(double s) {
    for (auto& slice : slices_)
        for (auto& x : slice) x *= s;
}

double expect_terminal_inner(std::span<const double> a, std::span<const double> b,
                             std::int64_t leaves, int n_comp, const SpatialGrid& grid) {
    if (a.size() != b.size() || a.size() != slice_size(leaves, n_comp, grid.n_x))
        throw InvariantError("expect_terminal_inner: slice size mismatch");
    const double w = 1.0 / static_cast<double>(leaves);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
    return acc * w * grid.h;
}

double expect_spacetime_inner(const AdaptedField& a, const AdaptedField& b,
                              const SpatialGrid& grid, const TimeGrid& tgrid,
                              const NodeMask* mask, const std::vector<double>* time_weight,
                              int a_comp, int b_comp) {
    if (a.n_x() != b.n_x()) throw InvariantError("expect_spacetime_inner: n_x mismatch");
    if ((a_comp < 0) != (b_comp < 0))
        throw InvariantError("expect_spacetime_inner: mixed component selection");
    const bool all = a_comp < 0;
    if (all && a.n_comp() != b.n_comp())
        throw InvariantError("expect_spacetime_inner: component count mismatch");
    const int m_last = std::min({a.last_index(), b.last_index(), tgrid.n_steps() - 1});
    const int n_x = a.n_x();
    const int pairs = all ? a.n_comp() : 1;
    double acc = 0.0;
    for (int m = 0; m <= m_last; ++m) {
        const double w = 1.0 / static_cast<double>(std::int64_t{1} << a.level(m));
        const double tw = time_weight ? (*time_weight)[static_cast<std::size_t>(m)] : 1.0;
        const std::int64_t nodes = a.nodes(m);
        double lvl = 0.0;
        for (std::int64_t p = 0; p < nodes; ++p)
            for (int c = 0; c < pairs; ++c) {
                auto va = a.at(m, p, all ? c : a_comp);
                auto vb = b.at(m, p, all ? c : b_comp);
                if (mask) {
                    for (int j = 0; j < n_x; ++j)
                        if (mask->in[static_cast<std::size_t>(j)])
                            lvl += va[static_cast<std::size_t>(j)] * vb[static_cast<std::size_t>(j)];
                } else {
                    for (int j = 0; j < n_x; ++j)
                        lvl += va[static_cast<std::size_t>(j)] * vb[static_cast<std::size_t>(j)];
                }
            }
        acc += tgrid.dt * w * tw * lvl * grid.h;
    }
    return acc;
}

} // namespace nashpar
