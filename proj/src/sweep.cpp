#include "nashpar/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nashpar/errors.hpp"

namespace nashpar {

DiffusionStencil DiffusionStencil::make(const SpatialGrid& grid, const TimeGrid& tgrid) {
    DiffusionStencil s;
    s.n_x = grid.n_x;
    s.dt = tgrid.dt;
    s.h = grid.h;
    s.off = -tgrid.dt / (grid.h * grid.h);
    const double diag = 1.0 + 2.0 * tgrid.dt / (grid.h * grid.h);
    s.sub_fac.resize(static_cast<std::size_t>(s.n_x));
    s.inv_diag.resize(static_cast<std::size_t>(s.n_x));
    double d = diag;
    s.sub_fac[0] = 0.0;
    s.inv_diag[0] = 1.0 / d;
    for (int i = 1; i < s.n_x; ++i) {
        const double w = s.off / d;
        s.sub_fac[static_cast<std::size_t>(i)] = w;
        d = diag - w * s.off;
        s.inv_diag[static_cast<std::size_t>(i)] = 1.0 / d;
    }

    // Residual check on a fixed probe: apply after solve must reproduce it.
    std::vector<double> probe(static_cast<std::size_t>(s.n_x)), back(probe.size());
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : probe) v = u(rng);
    std::vector<double> x = probe;
    s.solve_in_place(x.data());
    s.apply(x.data(), back.data());
    double err = 0.0, ref = 0.0;
    for (int i = 0; i < s.n_x; ++i) {
        err = std::max(err, std::abs(back[static_cast<std::size_t>(i)] -
                                     probe[static_cast<std::size_t>(i)]));
        ref = std::max(ref, std::abs(probe[static_cast<std::size_t>(i)]));
    }
    if (err > 1e-12 * (1.0 + ref))
        throw InvariantError("DiffusionStencil: factorization residual exceeds 1e-12");
    return s;
}

void DiffusionStencil::solve_in_place(double* x) const {
    for (int i = 1; i < n_x; ++i) x[i] -= sub_fac[static_cast<std::size_t>(i)] * x[i - 1];
    x[n_x - 1] *= inv_diag[static_cast<std::size_t>(n_x - 1)];
    for (int i = n_x - 2; i >= 0; --i)
        x[i] = (x[i] - off * x[i + 1]) * inv_diag[static_cast<std::size_t>(i)];
}

void DiffusionStencil::apply(const double* x, double* out) const {
    const double diag = 1.0 - 2.0 * off;
    for (int i = 0; i < n_x; ++i) {
        double v = diag * x[i];
        if (i > 0) v += off * x[i - 1];
        if (i + 1 < n_x) v += off * x[i + 1];
        out[i] = v;
    }
}

CouplingField CouplingField::constant(double a11, double a12, double a21, double a22, int n_t,
                                      int n_x) {
    CouplingField c;
    c.n_t = n_t;
    c.n_x = n_x;
    const std::size_t total = static_cast<std::size_t>(n_t) * static_cast<std::size_t>(n_x);
    c.a[0].assign(total, a11);
    c.a[1].assign(total, a12);
    c.a[2].assign(total, a21);
    c.a[3].assign(total, a22);
    return c;
}

double CouplingField::norm_inf() const {
    double n = 0.0;
    for (std::size_t i = 0; i < a[0].size(); ++i) {
        n = std::max(n, std::abs(a[0][i]) + std::abs(a[1][i]));
        n = std::max(n, std::abs(a[2][i]) + std::abs(a[3][i]));
    }
    return n;
}

bool CouplingField::finite() const {
    for (const auto& e : a)
        for (double v : e)
            if (!std::isfinite(v)) return false;
    return true;
}

void CouplingField::require_sign_condition(const NodeMask& mask_O0, double a0) const {
    if (a0 <= 0.0) throw ValidationError("coupling: sign threshold a_0 must be positive");
    bool any_pos = false, any_neg = false;
    for (int m = 0; m < n_t; ++m)
        for (int j = 0; j < n_x; ++j) {
            if (!mask_O0.in[static_cast<std::size_t>(j)]) continue;
            const double v = at(1, 0, m, j);
            if (v >= a0) any_pos = true;
            else if (v <= -a0) any_neg = true;
            else
                throw ValidationError(
                    "coupling: violated condition |a_21| >= a_0 > 0 on (0,T) x O_0");
        }
    if (any_pos && any_neg)
        throw ValidationError("coupling: a_21 changes sign on (0,T) x O_0");
}

namespace {

// Drift source for component c at (m, node p), including localized terms.
inline double drift_at(const SourceSpec& src, int m, std::int64_t p, int c, int j) {
    double f = 0.0;
    if (src.drift) f += src.drift->at(m, p, c)[static_cast<std::size_t>(j)];
    for (const auto& loc : src.localized) {
        if (loc.comp != c || !loc.mask.in[static_cast<std::size_t>(j)]) continue;
        const double tw = loc.time_weight ? (*loc.time_weight)[static_cast<std::size_t>(m)] : 1.0;
        f += loc.gain * tw * loc.field->at(m, p, loc.field_comp)[static_cast<std::size_t>(j)];
    }
    return f;
}

} // namespace

void forward_step(const SweepContext& ctx, const SourceSpec& src, int n_comp, int m,
                  const LevelValues& y_curr, LevelValues& y_next) {
    const int n_x = ctx.grid->n_x;
    const double dt = ctx.tgrid->dt;
    const std::int64_t nodes = std::int64_t{1} << ctx.tgrid->level(m);
    const bool branch = ctx.tgrid->is_branch_step(m);
    const std::size_t stride = static_cast<std::size_t>(n_comp) * n_x;
    if (y_curr.size() != static_cast<std::size_t>(nodes) * stride)
        throw InvariantError("forward_step: input slice size mismatch");
    y_next.resize((branch ? 2 * static_cast<std::size_t>(nodes) : static_cast<std::size_t>(nodes)) *
                  stride);

    for_each_node(ctx.exec, nodes, [&](std::int64_t p) {
        std::vector<double> star(stride);
        const double* y = y_curr.data() + static_cast<std::size_t>(p) * stride;
        for (int c = 0; c < n_comp; ++c) {
            double* rhs = star.data() + static_cast<std::size_t>(c) * n_x;
            for (int j = 0; j < n_x; ++j) {
                double coup = 0.0;
                for (int cc = 0; cc < n_comp; ++cc)
                    coup += ctx.A->at(c, cc, m, j) * y[static_cast<std::size_t>(cc) * n_x + j];
                rhs[j] = y[static_cast<std::size_t>(c) * n_x + j] +
                         dt * (coup + drift_at(src, m, p, c, j));
            }
            ctx.st->solve_in_place(rhs);
        }
        if (!branch) {
            std::copy(star.begin(), star.end(),
                      y_next.begin() + static_cast<std::size_t>(p) * stride);
            return;
        }
        for (int b = 0; b < 2; ++b) {
            const double s = (b == 0) ? ctx.tree->sqrt_dtW : -ctx.tree->sqrt_dtW;
            double* out = y_next.data() + (static_cast<std::size_t>(2 * p + b)) * stride;
            for (int c = 0; c < n_comp; ++c) {
                const double* g =
                    src.noise[static_cast<std::size_t>(c)]
                        ? src.noise[static_cast<std::size_t>(c)]->at(m, p, 0).data()
                        : nullptr;
                for (int j = 0; j < n_x; ++j)
                    out[static_cast<std::size_t>(c) * n_x + j] =
                        star[static_cast<std::size_t>(c) * n_x + j] + (g ? s * g[j] : 0.0);
            }
        }
    });
}

void backward_step(const SweepContext& ctx, const SourceSpec& src, int n_comp, int m,
                   const LevelValues& z_next, LevelValues& z_curr, LevelValues& w_curr,
                   LevelValues& Zc_curr) {
    if (src.noise[0] || src.noise[1])
        throw InvariantError("backward_step: backward systems carry no noise source");
    const int n_x = ctx.grid->n_x;
    const double dt = ctx.tgrid->dt;
    const std::int64_t nodes = std::int64_t{1} << ctx.tgrid->level(m);
    const bool branch = ctx.tgrid->is_branch_step(m);
    const std::size_t stride = static_cast<std::size_t>(n_comp) * n_x;
    if (z_next.size() != (branch ? 2 * static_cast<std::size_t>(nodes)
                                 : static_cast<std::size_t>(nodes)) *
                             stride)
        throw InvariantError("backward_step: input slice size mismatch");
    z_curr.resize(static_cast<std::size_t>(nodes) * stride);
    w_curr.resize(static_cast<std::size_t>(nodes) * stride);
    Zc_curr.assign(static_cast<std::size_t>(nodes) * stride, 0.0);

    const double inv2s = branch ? 1.0 / (2.0 * ctx.tree->sqrt_dtW) : 0.0;
    for_each_node(ctx.exec, nodes, [&](std::int64_t p) {
        double* w = w_curr.data() + static_cast<std::size_t>(p) * stride;
        double* zc = Zc_curr.data() + static_cast<std::size_t>(p) * stride;
        if (branch) {
            const double* up = z_next.data() + static_cast<std::size_t>(2 * p) * stride;
            const double* dn = z_next.data() + static_cast<std::size_t>(2 * p + 1) * stride;
            for (std::size_t i = 0; i < stride; ++i) {
                w[i] = 0.5 * (up[i] + dn[i]);
                zc[i] = (up[i] - dn[i]) * inv2s;
            }
        } else {
            const double* zn = z_next.data() + static_cast<std::size_t>(p) * stride;
            std::copy(zn, zn + stride, w);
        }
        for (int c = 0; c < n_comp; ++c) ctx.st->solve_in_place(w + static_cast<std::size_t>(c) * n_x);
        double* z = z_curr.data() + static_cast<std::size_t>(p) * stride;
        for (int c = 0; c < n_comp; ++c)
            for (int j = 0; j < n_x; ++j) {
                double coup = 0.0;
                for (int cc = 0; cc < n_comp; ++cc)
                    coup += ctx.A->at(cc, c, m, j) * w[static_cast<std::size_t>(cc) * n_x + j];
                z[static_cast<std::size_t>(c) * n_x + j] =
                    w[static_cast<std::size_t>(c) * n_x + j] +
                    dt * (coup + drift_at(src, m, p, c, j));
            }
    });
}

AdaptedField forward_sweep(const SweepContext& ctx, const SourceSpec& src, int n_comp,
                           const LevelValues& y0) {
    const int M = ctx.tgrid->n_steps();
    AdaptedField y(*ctx.tgrid, *ctx.tree, n_comp, ctx.grid->n_x, M);
    y.slice(0) = y0;
    for (int m = 0; m < M; ++m) forward_step(ctx, src, n_comp, m, y.slice(m), y.slice(m + 1));
    return y;
}

BackwardResult backward_sweep(const SweepContext& ctx, const SourceSpec& src, int n_comp,
                              const LevelValues& zT) {
    const int M = ctx.tgrid->n_steps();
    BackwardResult r{AdaptedField(*ctx.tgrid, *ctx.tree, n_comp, ctx.grid->n_x, M),
                     AdaptedField(*ctx.tgrid, *ctx.tree, n_comp, ctx.grid->n_x, M - 1),
                     AdaptedField(*ctx.tgrid, *ctx.tree, n_comp, ctx.grid->n_x, M - 1)};
    r.z.slice(M) = zT;
    for (int m = M - 1; m >= 0; --m)
        backward_step(ctx, src, n_comp, m, r.z.slice(m + 1), r.z.slice(m), r.w.slice(m),
                      r.Zc.slice(m));
    return r;
}

double expect_noise_inner(const AdaptedField& a, const AdaptedField& b, const SpatialGrid& grid,
                          const TimeGrid& tgrid, int a_comp, int b_comp) {
    if (a.n_x() != b.n_x()) throw InvariantError("expect_noise_inner: n_x mismatch");
    if ((a_comp < 0) != (b_comp < 0))
        throw InvariantError("expect_noise_inner: mixed component selection");
    const bool all = a_comp < 0;
    if (all && a.n_comp() != b.n_comp())
        throw InvariantError("expect_noise_inner: component count mismatch");
    const int m_last = std::min({a.last_index(), b.last_index(), tgrid.n_steps() - 1});
    const int pairs = all ? a.n_comp() : 1;
    double acc = 0.0;
    for (int m = 0; m <= m_last; ++m) {
        if (!tgrid.is_branch_step(m)) continue;
        const double w = 1.0 / static_cast<double>(std::int64_t{1} << a.level(m));
        const std::int64_t nodes = a.nodes(m);
        double lvl = 0.0;
        for (std::int64_t p = 0; p < nodes; ++p)
            for (int c = 0; c < pairs; ++c) {
                auto va = a.at(m, p, all ? c : a_comp);
                auto vb = b.at(m, p, all ? c : b_comp);
                for (int j = 0; j < a.n_x(); ++j)
                    lvl += va[static_cast<std::size_t>(j)] * vb[static_cast<std::size_t>(j)];
            }
        acc += tgrid.dtW * w * lvl * grid.h;
    }
    return acc;
}

} // namespace nashpar
