#include "nashpar/grid.hpp"

#include <algorithm>
#include <cmath>

#include "nashpar/errors.hpp"

namespace nashpar {

SpatialGrid SpatialGrid::make(int n_x, double length) {
    if (n_x < 3)
        throw ValidationError("n_x must be >= 3, got " + std::to_string(n_x));
    if (!(length > 0.0) || !std::isfinite(length))
        throw ValidationError("domain length must be positive and finite");
    SpatialGrid g;
    g.n_x = n_x;
    g.length = length;
    g.h = length / static_cast<double>(n_x + 1);
    g.nodes.resize(static_cast<std::size_t>(n_x));
    for (int j = 0; j < n_x; ++j)
        g.nodes[static_cast<std::size_t>(j)] = static_cast<double>(j + 1) * g.h;
    return g;
}

TimeGrid TimeGrid::make(double T, int K, int R) {
    if (!(T > 0.0) || !std::isfinite(T))
        throw ValidationError("horizon T must be positive and finite");
    if (K < 1 || R < 1)
        throw ValidationError("noise steps K and sub-steps R must be >= 1");
    TimeGrid t;
    t.T = T;
    t.K = K;
    t.R = R;
    t.dt = T / static_cast<double>(K * R);
    t.dtW = T / static_cast<double>(K);
    return t;
}

int NodeMask::count() const {
    int c = 0;
    for (char v : in)
        c += (v != 0);
    return c;
}

bool NodeMask::intersects(const NodeMask& other) const {
    for (std::size_t j = 0; j < in.size(); ++j)
        if (in[j] && other.in[j])
            return true;
    return false;
}

bool NodeMask::subset_of(const NodeMask& other) const {
    for (std::size_t j = 0; j < in.size(); ++j)
        if (in[j] && !other.in[j])
            return false;
    return true;
}

NodeMask NodeMask::from_intervals(const SpatialGrid& grid,
                                  const std::vector<std::pair<double, double>>& intervals) {
    NodeMask m;
    m.in.assign(static_cast<std::size_t>(grid.n_x), 0);
    const double eps = 1e-12 * grid.length;
    for (const auto& [lo, hi] : intervals) {
        if (!(lo <= hi))
            throw ValidationError("mask interval has lo > hi");
        for (int j = 0; j < grid.n_x; ++j) {
            const double x = grid.nodes[static_cast<std::size_t>(j)];
            if (x >= lo - eps && x <= hi + eps)
                m.in[static_cast<std::size_t>(j)] = 1;
        }
    }
    return m;
}

NodeMask NodeMask::full(int n_x) {
    NodeMask m;
    m.in.assign(static_cast<std::size_t>(n_x), 1);
    return m;
}

void SubdomainLayout::validate(const SpatialGrid& grid) const {
    const auto n = static_cast<std::size_t>(grid.n_x);
    auto check_size = [&](const NodeMask& m, const char* name) {
        if (m.in.size() != n)
            throw ValidationError(std::string(name) + " mask size does not match the grid");
        if (m.empty())
            throw ValidationError(std::string(name) + " mask is empty");
    };
    check_size(mask_G0, "G0");
    check_size(mask_Od, "Od");
    check_size(mask_O0, "O0");
    if (mask_Gi.empty())
        throw ValidationError("at least one follower region is required");
    for (std::size_t i = 0; i < mask_Gi.size(); ++i) {
        check_size(mask_Gi[i], "Gi");
        if (mask_G0.intersects(mask_Gi[i]))
            throw ValidationError("violated condition G_0 ∩ G_i = ∅ for follower " +
                                  std::to_string(i + 1));
    }
    if (!mask_G0.intersects(mask_Od))
        throw ValidationError("violated condition G_0 ∩ O_d ≠ ∅");
    NodeMask inter;
    inter.in.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j)
        inter.in[j] = (mask_G0.in[j] && mask_Od.in[j]) ? 1 : 0;
    if (!mask_O0.subset_of(inter))
        throw ValidationError("violated condition O_0 ⊂ G_0 ∩ O_d");
}

} // namespace nashpar
