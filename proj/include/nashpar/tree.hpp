#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nashpar/grid.hpp"

namespace nashpar {

// Binomial tree over the driving noise: level k has 2^k nodes, all with
// weight 2^-k. A node's children at level k+1 are 2*p (increment +sqrt(dtW))
// and 2*p+1 (increment -sqrt(dtW)).
struct NoiseTree {
    int K = 0;
    double dtW = 0.0;
    double sqrt_dtW = 0.0;

    static NoiseTree make(const TimeGrid& tgrid);

    std::int64_t nodes_at(int level) const { return std::int64_t{1} << level; }
    // Signed increment on the edge into a level-(k+1) node.
    double increment_into(std::int64_t child) const {
        return (child & 1) == 0 ? sqrt_dtW : -sqrt_dtW;
    }
};

// One spatial slice of a tree level: values indexed [node][comp][x].
using LevelValues = std::vector<double>;

inline std::size_t slice_size(std::int64_t nodes, int n_comp, int n_x) {
    return static_cast<std::size_t>(nodes) * static_cast<std::size_t>(n_comp) *
           static_cast<std::size_t>(n_x);
}

// (field at level k+1) -> per-parent average; the tree makes conditional
// expectations exact two-point averages.
LevelValues conditional_expectation(const LevelValues& child_level, std::int64_t parent_nodes,
                                    int n_comp, int n_x);

// (field at level k+1) -> per-parent scaled difference so that
// child = parent_average + coefficient * increment holds node-exactly.
LevelValues martingale_coefficient(const LevelValues& child_level, std::int64_t parent_nodes,
                                   int n_comp, int n_x, const NoiseTree& tree);

// Trajectory of an adapted random field: one slice per PDE index m = 0..M,
// the slice at m living on tree level floor(m/R). Values at time m depend
// only on the first level(m) increments by construction.
class AdaptedField {
public:
    AdaptedField() = default;
    AdaptedField(const TimeGrid& tgrid, const NoiseTree& tree, int n_comp, int n_x,
                 int last_index /* M for nodal trajectories, M-1 for sources */);

    int n_comp() const { return n_comp_; }
    int n_x() const { return n_x_; }
    int last_index() const { return last_index_; }
    int level(int m) const { return m / R_; }
    std::int64_t nodes(int m) const { return std::int64_t{1} << level(m); }

    LevelValues& slice(int m) { return slices_[static_cast<std::size_t>(m)]; }
    const LevelValues& slice(int m) const { return slices_[static_cast<std::size_t>(m)]; }

    std::span<double> at(int m, std::int64_t node);
    std::span<const double> at(int m, std::int64_t node) const;

    std::span<double> at(int m, std::int64_t node, int comp);
    std::span<const double> at(int m, std::int64_t node, int comp) const;

    void fill(double v);
    bool same_shape(const AdaptedField& o) const;

    // Largest nodal absolute value across the trajectory.
    double max_abs() const;

    // this += s * other (identical shapes).
    void axpy(double s, const AdaptedField& other);

    void scale(double s);

    // Hard cap guarding tree blow-up; construction rejects larger fields.
    static constexpr std::int64_t max_total_scalars = std::int64_t{1} << 27;

private:
    int n_comp_ = 0;
    int n_x_ = 0;
    int R_ = 1;
    int last_index_ = -1;
    std::vector<LevelValues> slices_;
};

// 2^-K-weighted inner product of two terminal slices: sum over leaves,
// components and space of h*a*b.
double expect_terminal_inner(std::span<const double> a, std::span<const double> b,
                             std::int64_t leaves, int n_comp, const SpatialGrid& grid);

// Left-endpoint rule in time of the expected spatial inner product:
// sum_m dt * E<a_m, b_m>, optionally restricted to a node mask and scaled by
// a per-time weight. a_comp/b_comp select single components; -1 pairs all
// components (counts must then agree).
double expect_spacetime_inner(const AdaptedField& a, const AdaptedField& b,
                              const SpatialGrid& grid, const TimeGrid& tgrid,
                              const NodeMask* mask = nullptr,
                              const std::vector<double>* time_weight = nullptr, int a_comp = -1,
                              int b_comp = -1);

} // namespace nashpar
