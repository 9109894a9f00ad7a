#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace nashpar {

// Interior nodes of a uniform Dirichlet grid on (0, L): x_j = j*h, j = 1..n_x.
struct SpatialGrid {
    int n_x = 0;
    double length = 0.0;
    double h = 0.0;
    std::vector<double> nodes;

    static SpatialGrid make(int n_x, double length);
};

// PDE steps nested inside noise steps: dt = T/(K*R), dtW = T/K, M = K*R.
struct TimeGrid {
    double T = 0.0;
    int K = 0;      // noise steps
    int R = 0;      // PDE sub-steps per noise step
    double dt = 0.0;
    double dtW = 0.0;

    static TimeGrid make(double T, int K, int R);

    int n_steps() const { return K * R; }
    double t(int m) const { return static_cast<double>(m) * dt; }
    // Tree level active at PDE index m.
    int level(int m) const { return m / R; }
    // True when the step m -> m+1 crosses a noise boundary (branching step).
    bool is_branch_step(int m) const { return (m + 1) % R == 0; }
    // PDE index whose step applies the noise increment of level k.
    int branch_step_of_level(int k) const { return (k + 1) * R - 1; }
};

// Node indicator over interior nodes, always a union of contiguous runs.
struct NodeMask {
    std::vector<char> in; // size n_x, 0/1

    int count() const;
    bool empty() const { return count() == 0; }
    bool contains(int j) const { return in[static_cast<std::size_t>(j)] != 0; }
    bool intersects(const NodeMask& other) const;
    bool subset_of(const NodeMask& other) const;

    // Marks nodes whose coordinate lies in any [lo, hi] interval.
    static NodeMask from_intervals(const SpatialGrid& grid,
                                   const std::vector<std::pair<double, double>>& intervals);
    static NodeMask full(int n_x);
};

// Control and observation regions. The leader region and every follower
// region are disjoint; the small region O0 sits inside both the leader
// region and the observation region and carries the coupling sign condition.
struct SubdomainLayout {
    NodeMask mask_G0;
    std::vector<NodeMask> mask_Gi;
    NodeMask mask_Od;
    NodeMask mask_O0;

    int followers() const { return static_cast<int>(mask_Gi.size()); }

    // Throws ValidationError naming the violated condition.
    void validate(const SpatialGrid& grid) const;
};

} // namespace nashpar
