#include "nashpar/oracle.hpp"

#include <cmath>
#include <utility>

#include "nashpar/errors.hpp"

namespace nashpar {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd heat_solve_inverse(const GameSpec& spec) {
    const int nx = spec.grid.n_x;
    const double r = spec.tgrid.dt / (spec.grid.h * spec.grid.h);
    MatrixXd D = MatrixXd::Zero(nx, nx);
    for (int j = 0; j < nx; ++j) {
        D(j, j) = 1.0 + 2.0 * r;
        if (j > 0) D(j, j - 1) = -r;
        if (j + 1 < nx) D(j, j + 1) = -r;
    }
    return D.partialPivLu().inverse();
}

MatrixXd two_comp_blockdiag(const MatrixXd& L) {
    const auto nx = L.rows();
    MatrixXd out = MatrixXd::Zero(2 * nx, 2 * nx);
    out.topLeftCorner(nx, nx) = L;
    out.bottomRightCorner(nx, nx) = L;
    return out;
}

// (I + dt A_m) on one node slice, component-major layout; transpose swaps the
// coupling indices.
MatrixXd coupling_block(const GameSpec& spec, int m, bool transpose) {
    const int nx = spec.grid.n_x;
    MatrixXd B = MatrixXd::Identity(2 * nx, 2 * nx);
    for (int c = 0; c < 2; ++c)
        for (int cc = 0; cc < 2; ++cc)
            for (int j = 0; j < nx; ++j) {
                const double a = transpose ? spec.coeffs.at(cc, c, m, j)
                                           : spec.coeffs.at(c, cc, m, j);
                B(c * nx + j, cc * nx + j) += spec.tgrid.dt * a;
            }
    return B;
}

int scenario_low_comp(const GameSpec& spec) {
    return spec.scenario == Scenario::full_observation ? 0 : 1;
}

void assemble_forward(DenseInstance& inst, const MatrixXd& Lhat) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    const int s = 2 * nx;
    const double dt = spec.tgrid.dt;
    const double sq = spec.tree.sqrt_dtW;

    inst.T_y0 = MatrixXd::Zero(inst.traj_dim, s);
    inst.T_f = MatrixXd::Zero(inst.traj_dim, inst.src_dim);
    inst.T_g = MatrixXd::Zero(inst.traj_dim, inst.noise_dim);
    inst.T_y0.block(0, 0, s, s) = MatrixXd::Identity(s, s);

    for (int m = 0; m < M; ++m) {
        const MatrixXd SM = Lhat * coupling_block(spec, m, false);
        const std::int64_t nodes = std::int64_t{1} << spec.tgrid.level(m);
        const bool branch = spec.tgrid.is_branch_step(m);
        for (std::int64_t p = 0; p < nodes; ++p) {
            const std::int64_t row_m = inst.traj_off[static_cast<std::size_t>(m)] + p * s;
            const MatrixXd star_y0 = SM * inst.T_y0.block(row_m, 0, s, inst.T_y0.cols());
            MatrixXd star_f = SM * inst.T_f.block(row_m, 0, s, inst.T_f.cols());
            star_f.middleCols(row_m, s) += dt * Lhat;
            const MatrixXd star_g = SM * inst.T_g.block(row_m, 0, s, inst.T_g.cols());
            if (branch) {
                const std::int64_t gcol = inst.noise_off[static_cast<std::size_t>(m)] + p * s;
                for (int b = 0; b < 2; ++b) {
                    const std::int64_t child = 2 * p + b;
                    const double sign = b == 0 ? 1.0 : -1.0;
                    const std::int64_t row_c =
                        inst.traj_off[static_cast<std::size_t>(m + 1)] + child * s;
                    inst.T_y0.block(row_c, 0, s, inst.T_y0.cols()) = star_y0;
                    inst.T_f.block(row_c, 0, s, inst.T_f.cols()) = star_f;
                    inst.T_g.block(row_c, 0, s, inst.T_g.cols()) = star_g;
                    inst.T_g.block(row_c, gcol, s, s) +=
                        sign * sq * MatrixXd::Identity(s, s);
                }
            } else {
                const std::int64_t row_n =
                    inst.traj_off[static_cast<std::size_t>(m + 1)] + p * s;
                inst.T_y0.block(row_n, 0, s, inst.T_y0.cols()) = star_y0;
                inst.T_f.block(row_n, 0, s, inst.T_f.cols()) = star_f;
                inst.T_g.block(row_n, 0, s, inst.T_g.cols()) = star_g;
            }
        }
    }
}

void assemble_backward(DenseInstance& inst, const MatrixXd& Lhat) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    const int s = 2 * nx;
    const double dt = spec.tgrid.dt;
    const double sq = spec.tree.sqrt_dtW;

    inst.B_zT_z = MatrixXd::Zero(inst.traj_dim, inst.term_dim);
    inst.B_r_z = MatrixXd::Zero(inst.traj_dim, inst.src_dim);
    inst.B_zT_w = MatrixXd::Zero(inst.src_dim, inst.term_dim);
    inst.B_r_w = MatrixXd::Zero(inst.src_dim, inst.src_dim);
    inst.B_zT_Zc = MatrixXd::Zero(inst.noise_dim, inst.term_dim);
    inst.B_r_Zc = MatrixXd::Zero(inst.noise_dim, inst.src_dim);

    inst.B_zT_z.block(inst.traj_off[static_cast<std::size_t>(M)], 0, inst.term_dim,
                      inst.term_dim) = MatrixXd::Identity(inst.term_dim, inst.term_dim);
    MatrixXd Cz_T = MatrixXd::Identity(inst.term_dim, inst.term_dim);
    MatrixXd Cz_r = MatrixXd::Zero(inst.term_dim, inst.src_dim);

    for (int m = M - 1; m >= 0; --m) {
        const std::int64_t nodes = std::int64_t{1} << spec.tgrid.level(m);
        const bool branch = spec.tgrid.is_branch_step(m);
        const MatrixXd TB = coupling_block(spec, m, true);
        MatrixXd nz_T = MatrixXd::Zero(nodes * s, inst.term_dim);
        MatrixXd nz_r = MatrixXd::Zero(nodes * s, inst.src_dim);
        for (std::int64_t p = 0; p < nodes; ++p) {
            MatrixXd what_T, what_r;
            if (branch) {
                what_T = 0.5 * (Cz_T.block(2 * p * s, 0, s, inst.term_dim) +
                                Cz_T.block((2 * p + 1) * s, 0, s, inst.term_dim));
                what_r = 0.5 * (Cz_r.block(2 * p * s, 0, s, inst.src_dim) +
                                Cz_r.block((2 * p + 1) * s, 0, s, inst.src_dim));
                const std::int64_t zrow = inst.noise_off[static_cast<std::size_t>(m)] + p * s;
                inst.B_zT_Zc.block(zrow, 0, s, inst.term_dim) =
                    (Cz_T.block(2 * p * s, 0, s, inst.term_dim) -
                     Cz_T.block((2 * p + 1) * s, 0, s, inst.term_dim)) /
                    (2.0 * sq);
                inst.B_r_Zc.block(zrow, 0, s, inst.src_dim) =
                    (Cz_r.block(2 * p * s, 0, s, inst.src_dim) -
                     Cz_r.block((2 * p + 1) * s, 0, s, inst.src_dim)) /
                    (2.0 * sq);
            } else {
                what_T = Cz_T.block(p * s, 0, s, inst.term_dim);
                what_r = Cz_r.block(p * s, 0, s, inst.src_dim);
            }
            const std::int64_t srow = inst.traj_off[static_cast<std::size_t>(m)] + p * s;
            const MatrixXd w_T = Lhat * what_T;
            const MatrixXd w_r = Lhat * what_r;
            inst.B_zT_w.block(srow, 0, s, inst.term_dim) = w_T;
            inst.B_r_w.block(srow, 0, s, inst.src_dim) = w_r;
            MatrixXd z_T = TB * w_T;
            MatrixXd z_r = TB * w_r;
            z_r.middleCols(srow, s) += dt * MatrixXd::Identity(s, s);
            inst.B_zT_z.block(srow, 0, s, inst.term_dim) = z_T;
            inst.B_r_z.block(srow, 0, s, inst.src_dim) = z_r;
            nz_T.block(p * s, 0, s, inst.term_dim) = z_T;
            nz_r.block(p * s, 0, s, inst.src_dim) = z_r;
        }
        Cz_T = std::move(nz_T);
        Cz_r = std::move(nz_r);
    }
}

VectorXd leader_drift_vector(const DenseInstance& inst, const AdaptedField& u1) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    VectorXd f = VectorXd::Zero(inst.src_dim);
    for (int m = 0; m < M; ++m)
        for (std::int64_t p = 0; p < u1.nodes(m); ++p) {
            auto vals = u1.at(m, p, 0);
            for (int j = 0; j < nx; ++j)
                if (spec.layout.mask_G0.in[static_cast<std::size_t>(j)])
                    f(inst.traj_index(m, p, 0, j)) = vals[static_cast<std::size_t>(j)];
        }
    return f;
}

// Diagonal of the observation quadrature on trajectory entries.
VectorXd observation_metric(const DenseInstance& inst) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    const int c_lo = scenario_low_comp(spec);
    VectorXd d = VectorXd::Zero(inst.traj_dim);
    for (int m = 0; m < M; ++m) {
        const double wm = spec.tgrid.dt * spec.grid.h /
                          static_cast<double>(std::int64_t{1} << spec.tgrid.level(m));
        for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
            for (int c = c_lo; c < 2; ++c)
                for (int j = 0; j < nx; ++j)
                    if (spec.layout.mask_Od.in[static_cast<std::size_t>(j)])
                        d(inst.traj_index(m, p, c, j)) = wm;
    }
    return d;
}

VectorXd packed_target(const DenseInstance& inst, int i) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    const auto& t = spec.targets[static_cast<std::size_t>(i)];
    VectorXd out = VectorXd::Zero(inst.traj_dim);
    const int last = std::min(M, t.last_index());
    for (int m = 0; m <= last; ++m) {
        const auto& sl = t.slice(m);
        for (std::size_t k = 0; k < sl.size(); ++k)
            out(inst.traj_off[static_cast<std::size_t>(m)] + static_cast<std::int64_t>(k)) =
                sl[k];
    }
    return out;
}

struct OptimalityCore {
    VectorXd y;
    VectorXd v_stacked;
};

OptimalityCore optimality_core(const DenseInstance& inst, const VectorXd& q, bool use_targets) {
    const int nf = inst.spec.followers();
    VectorXd a = VectorXd::Zero(static_cast<std::int64_t>(nf) * inst.src1_dim);
    for (int i = 0; i < nf; ++i) {
        VectorXd data = q;
        if (use_targets) data -= packed_target(inst, i);
        a.segment(static_cast<std::int64_t>(i) * inst.src1_dim, inst.src1_dim) =
            inst.feedback_of_y[static_cast<std::size_t>(i)] * data;
    }
    OptimalityCore out;
    out.v_stacked = inst.lu_opt.solve(a);
    out.y = q;
    for (int i = 0; i < nf; ++i)
        out.y += inst.T_f * (inst.embed[static_cast<std::size_t>(i)] *
                             out.v_stacked.segment(static_cast<std::int64_t>(i) * inst.src1_dim,
                                                   inst.src1_dim));
    return out;
}

struct CoupledCore {
    VectorXd phi, w, Zc;
    VectorXd psi_stacked;
};

CoupledCore coupled_core(const DenseInstance& inst, const VectorXd& phiT) {
    CoupledCore out;
    const VectorXd a = inst.coupled_rhs_map * phiT;
    out.psi_stacked = inst.lu_coupled.solve(a);
    const VectorXd rphi = inst.R_mat * out.psi_stacked;
    out.phi = inst.B_zT_z * phiT + inst.B_r_z * rphi;
    out.w = inst.B_zT_w * phiT + inst.B_r_w * rphi;
    out.Zc = inst.B_zT_Zc * phiT + inst.B_r_Zc * rphi;
    return out;
}

// Leader inputs read off a dense coupled-adjoint solve: drift chi_G0 w_1 and
// noise pair Zc.
VectorXd gramian_drift(const DenseInstance& inst, const VectorXd& w) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    VectorXd f = VectorXd::Zero(inst.src_dim);
    for (int m = 0; m < M; ++m)
        for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
            for (int j = 0; j < nx; ++j)
                if (spec.layout.mask_G0.in[static_cast<std::size_t>(j)]) {
                    const std::int64_t k = inst.traj_index(m, p, 0, j);
                    f(k) = w(k);
                }
    return f;
}

} // namespace

std::int64_t DenseInstance::traj_index(int m, std::int64_t node, int c, int j) const {
    return traj_off[static_cast<std::size_t>(m)] +
           (node * 2 + c) * spec.grid.n_x + j;
}

std::int64_t DenseInstance::src1_index(int m, std::int64_t node, int j) const {
    return src1_off[static_cast<std::size_t>(m)] + node * spec.grid.n_x + j;
}

std::int64_t DenseInstance::noise_index(int m, std::int64_t node, int c, int j) const {
    return noise_off[static_cast<std::size_t>(m)] + (node * 2 + c) * spec.grid.n_x + j;
}

DenseInstance assemble(const GameSpec& spec, std::int64_t max_unknowns) {
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    const int nf = spec.followers();
    if (static_cast<int>(spec.cost_w.size()) != M)
        throw InvariantError("assemble: spec not finalized");

    DenseInstance inst;
    inst.spec = spec;
    inst.traj_off.assign(static_cast<std::size_t>(M) + 1, 0);
    inst.src1_off.assign(static_cast<std::size_t>(M), 0);
    inst.noise_off.assign(static_cast<std::size_t>(M), -1);
    std::int64_t traj = 0, src1 = 0, noise = 0;
    for (int m = 0; m <= M; ++m) {
        inst.traj_off[static_cast<std::size_t>(m)] = traj;
        const std::int64_t nodes = std::int64_t{1} << spec.tgrid.level(m);
        traj += nodes * 2 * nx;
        if (m < M) {
            inst.src1_off[static_cast<std::size_t>(m)] = src1;
            src1 += nodes * nx;
            if (spec.tgrid.is_branch_step(m)) {
                inst.noise_off[static_cast<std::size_t>(m)] = noise;
                noise += nodes * 2 * nx;
            }
        }
    }
    inst.traj_dim = traj;
    inst.src_dim = inst.traj_off[static_cast<std::size_t>(M)];
    inst.src1_dim = src1;
    inst.noise_dim = noise;
    inst.term_dim = traj - inst.traj_off[static_cast<std::size_t>(M)];

    const std::int64_t worst =
        std::max({inst.traj_dim, static_cast<std::int64_t>(nf) * inst.traj_dim,
                  static_cast<std::int64_t>(nf) * inst.src1_dim});
    if (worst > max_unknowns)
        throw ValidationError("dense instance exceeds the dense unknown cap");

    const MatrixXd Lhat = two_comp_blockdiag(heat_solve_inverse(spec));
    assemble_forward(inst, Lhat);
    assemble_backward(inst, Lhat);

    inst.d_src = VectorXd::Zero(inst.src_dim);
    inst.d_src1 = VectorXd::Zero(inst.src1_dim);
    inst.d_noise = VectorXd::Zero(inst.noise_dim);
    for (int m = 0; m < M; ++m) {
        const double lvl = static_cast<double>(std::int64_t{1} << spec.tgrid.level(m));
        const double wsrc = spec.tgrid.dt * spec.grid.h / lvl;
        const double wnoi = spec.tgrid.dtW * spec.grid.h / lvl;
        for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
            for (int j = 0; j < nx; ++j) {
                inst.d_src1(inst.src1_index(m, p, j)) = wsrc;
                for (int c = 0; c < 2; ++c) {
                    inst.d_src(inst.traj_index(m, p, c, j)) = wsrc;
                    if (spec.tgrid.is_branch_step(m))
                        inst.d_noise(inst.noise_index(m, p, c, j)) = wnoi;
                }
            }
    }
    inst.c_term = spec.grid.h / static_cast<double>(spec.tree.nodes_at(spec.tree.K));

    inst.embed.clear();
    for (int i = 0; i < nf; ++i) {
        MatrixXd E = MatrixXd::Zero(inst.src_dim, inst.src1_dim);
        const auto& mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
        for (int m = 0; m < M; ++m)
            for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
                for (int j = 0; j < nx; ++j)
                    if (mask.in[static_cast<std::size_t>(j)])
                        E(inst.traj_index(m, p, 0, j), inst.src1_index(m, p, j)) = 1.0;
        inst.embed.push_back(std::move(E));
    }

    // Coupled-adjoint fixed point in the stacked psi unknown.
    const int c_lo = scenario_low_comp(spec);
    const std::int64_t P = static_cast<std::int64_t>(nf) * inst.traj_dim;
    inst.R_mat = MatrixXd::Zero(inst.src_dim, P);
    for (int i = 0; i < nf; ++i)
        for (int m = 0; m < M; ++m)
            for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
                for (int c = c_lo; c < 2; ++c)
                    for (int j = 0; j < nx; ++j)
                        if (spec.layout.mask_Od.in[static_cast<std::size_t>(j)]) {
                            const std::int64_t row = inst.traj_index(m, p, c, j);
                            inst.R_mat(row, static_cast<std::int64_t>(i) * inst.traj_dim + row) -=
                                spec.alpha[static_cast<std::size_t>(i)];
                        }

    MatrixXd M_loop = MatrixXd::Zero(P, P);
    inst.coupled_rhs_map = MatrixXd::Zero(P, inst.term_dim);
    const MatrixXd wr_R = inst.B_r_w * inst.R_mat;
    for (int i = 0; i < nf; ++i) {
        // psi_i responds to the drift source (1/beta_i) inv_cost_w w_1 chi_Gi.
        MatrixXd S = MatrixXd::Zero(inst.src_dim, inst.src_dim);
        const auto& mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
        for (int m = 0; m < M; ++m) {
            const double g = spec.inv_cost_w[static_cast<std::size_t>(m)] /
                             spec.beta[static_cast<std::size_t>(i)];
            for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
                for (int j = 0; j < nx; ++j)
                    if (mask.in[static_cast<std::size_t>(j)]) {
                        const std::int64_t k = inst.traj_index(m, p, 0, j);
                        S(k, k) = g;
                    }
        }
        const MatrixXd TS = inst.T_f * S;
        M_loop.middleRows(static_cast<std::int64_t>(i) * inst.traj_dim, inst.traj_dim) =
            TS * wr_R;
        inst.coupled_rhs_map.middleRows(static_cast<std::int64_t>(i) * inst.traj_dim,
                                        inst.traj_dim) = TS * inst.B_zT_w;
    }
    inst.lu_coupled = (MatrixXd::Identity(P, P) - M_loop).partialPivLu();

    // Optimality fixed point in the stacked v unknown.
    const std::int64_t V = static_cast<std::int64_t>(nf) * inst.src1_dim;
    inst.feedback_of_y.clear();
    for (int i = 0; i < nf; ++i) {
        MatrixXd O = MatrixXd::Zero(inst.src_dim, inst.traj_dim);
        for (int m = 0; m < M; ++m)
            for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
                for (int c = c_lo; c < 2; ++c)
                    for (int j = 0; j < nx; ++j)
                        if (spec.layout.mask_Od.in[static_cast<std::size_t>(j)]) {
                            const std::int64_t k = inst.traj_index(m, p, c, j);
                            O(k, k) = spec.alpha[static_cast<std::size_t>(i)];
                        }
        MatrixXd G = MatrixXd::Zero(inst.src1_dim, inst.src_dim);
        const auto& mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
        for (int m = 0; m < M; ++m) {
            const double g = -spec.inv_cost_w[static_cast<std::size_t>(m)] /
                             spec.beta[static_cast<std::size_t>(i)];
            for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
                for (int j = 0; j < nx; ++j)
                    if (mask.in[static_cast<std::size_t>(j)])
                        G(inst.src1_index(m, p, j), inst.traj_index(m, p, 0, j)) = g;
        }
        inst.feedback_of_y.push_back(G * (inst.B_r_w * O));
    }
    MatrixXd M_v = MatrixXd::Zero(V, V);
    for (int i = 0; i < nf; ++i)
        for (int j = 0; j < nf; ++j)
            M_v.block(static_cast<std::int64_t>(i) * inst.src1_dim,
                      static_cast<std::int64_t>(j) * inst.src1_dim, inst.src1_dim,
                      inst.src1_dim) = inst.feedback_of_y[static_cast<std::size_t>(i)] *
                                       (inst.T_f * inst.embed[static_cast<std::size_t>(j)]);
    inst.lu_opt = (MatrixXd::Identity(V, V) - M_v).partialPivLu();
    return inst;
}

Eigen::VectorXd pack_trajectory(const DenseInstance& inst, const AdaptedField& f) {
    const int M = inst.spec.tgrid.n_steps();
    if (f.n_comp() != 2 || f.last_index() != M)
        throw InvariantError("pack_trajectory: unexpected field shape");
    VectorXd out = VectorXd::Zero(inst.traj_dim);
    for (int m = 0; m <= M; ++m) {
        const auto& sl = f.slice(m);
        for (std::size_t k = 0; k < sl.size(); ++k)
            out(inst.traj_off[static_cast<std::size_t>(m)] + static_cast<std::int64_t>(k)) =
                sl[k];
    }
    return out;
}

Eigen::VectorXd pack_source(const DenseInstance& inst, const AdaptedField& f) {
    const int M = inst.spec.tgrid.n_steps();
    if (f.n_comp() != 2 || f.last_index() != M - 1)
        throw InvariantError("pack_source: unexpected field shape");
    VectorXd out = VectorXd::Zero(inst.src_dim);
    for (int m = 0; m < M; ++m) {
        const auto& sl = f.slice(m);
        for (std::size_t k = 0; k < sl.size(); ++k)
            out(inst.traj_off[static_cast<std::size_t>(m)] + static_cast<std::int64_t>(k)) =
                sl[k];
    }
    return out;
}

Eigen::VectorXd pack_control(const DenseInstance& inst, const AdaptedField& f) {
    const int M = inst.spec.tgrid.n_steps();
    if (f.n_comp() != 1 || f.last_index() != M - 1)
        throw InvariantError("pack_control: unexpected field shape");
    VectorXd out = VectorXd::Zero(inst.src1_dim);
    for (int m = 0; m < M; ++m) {
        const auto& sl = f.slice(m);
        for (std::size_t k = 0; k < sl.size(); ++k)
            out(inst.src1_off[static_cast<std::size_t>(m)] + static_cast<std::int64_t>(k)) =
                sl[k];
    }
    return out;
}

Eigen::VectorXd pack_noise(const DenseInstance& inst, const AdaptedField& u2,
                           const AdaptedField& u3) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    VectorXd out = VectorXd::Zero(inst.noise_dim);
    for (int m = 0; m < M; ++m) {
        if (!spec.tgrid.is_branch_step(m)) continue;
        for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p) {
            auto a = u2.at(m, p, 0);
            auto b = u3.at(m, p, 0);
            for (int j = 0; j < nx; ++j) {
                out(inst.noise_index(m, p, 0, j)) = a[static_cast<std::size_t>(j)];
                out(inst.noise_index(m, p, 1, j)) = b[static_cast<std::size_t>(j)];
            }
        }
    }
    return out;
}

AdaptedField unpack_trajectory(const DenseInstance& inst, const Eigen::VectorXd& x) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    AdaptedField f(spec.tgrid, spec.tree, 2, spec.grid.n_x, M);
    for (int m = 0; m <= M; ++m) {
        auto& sl = f.slice(m);
        for (std::size_t k = 0; k < sl.size(); ++k)
            sl[k] = x(inst.traj_off[static_cast<std::size_t>(m)] + static_cast<std::int64_t>(k));
    }
    return f;
}

FollowerControls unpack_controls(const DenseInstance& inst, const Eigen::VectorXd& stacked) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    FollowerControls out = FollowerControls::zero(spec);
    for (int i = 0; i < spec.followers(); ++i) {
        const auto base = static_cast<std::int64_t>(i) * inst.src1_dim;
        for (int m = 0; m < M; ++m) {
            auto& sl = out.v[static_cast<std::size_t>(i)].slice(m);
            for (std::size_t k = 0; k < sl.size(); ++k)
                sl[k] = stacked(base + inst.src1_off[static_cast<std::size_t>(m)] +
                                static_cast<std::int64_t>(k));
        }
    }
    return out;
}

Eigen::VectorXd dense_state(const DenseInstance& inst, const LevelValues& y0,
                            const LeaderControls& leaders, const FollowerControls& followers) {
    if (y0.size() != static_cast<std::size_t>(2 * inst.spec.grid.n_x))
        throw ValidationError("initial state must have 2 * n_x entries");
    VectorXd y0v(static_cast<std::int64_t>(y0.size()));
    for (std::size_t k = 0; k < y0.size(); ++k) y0v(static_cast<std::int64_t>(k)) = y0[k];
    VectorXd f = leader_drift_vector(inst, leaders.u1);
    for (int i = 0; i < inst.spec.followers(); ++i)
        f += inst.embed[static_cast<std::size_t>(i)] *
             pack_control(inst, followers.v[static_cast<std::size_t>(i)]);
    const VectorXd g = pack_noise(inst, leaders.u2, leaders.u3);
    return inst.T_y0 * y0v + inst.T_f * f + inst.T_g * g;
}

DenseBackward dense_backward(const DenseInstance& inst, const LevelValues& zT,
                             const Eigen::VectorXd& r) {
    if (static_cast<std::int64_t>(zT.size()) != inst.term_dim ||
        r.size() != inst.src_dim)
        throw InvariantError("dense_backward: shape mismatch");
    VectorXd zTv(inst.term_dim);
    for (std::size_t k = 0; k < zT.size(); ++k) zTv(static_cast<std::int64_t>(k)) = zT[k];
    DenseBackward out;
    out.z = inst.B_zT_z * zTv + inst.B_r_z * r;
    out.w = inst.B_zT_w * zTv + inst.B_r_w * r;
    out.Zc = inst.B_zT_Zc * zTv + inst.B_r_Zc * r;
    return out;
}

FollowerControls solve_dense_nash(const DenseInstance& inst, const LevelValues& y0,
                                  const LeaderControls& leaders) {
    const auto& spec = inst.spec;
    const int M = spec.tgrid.n_steps();
    const int nx = spec.grid.n_x;
    const int nf = spec.followers();
    const std::int64_t V = static_cast<std::int64_t>(nf) * inst.src1_dim;

    const VectorXd q = dense_state(inst, y0, leaders, FollowerControls::zero(spec));
    const VectorXd d_obs = observation_metric(inst);

    std::vector<MatrixXd> Lam;
    Lam.reserve(static_cast<std::size_t>(nf));
    for (int i = 0; i < nf; ++i)
        Lam.push_back(inst.T_f * inst.embed[static_cast<std::size_t>(i)]);

    MatrixXd K = MatrixXd::Zero(V, V);
    VectorXd rhs = VectorXd::Zero(V);
    for (int i = 0; i < nf; ++i) {
        const double ai = spec.alpha[static_cast<std::size_t>(i)];
        const double bi = spec.beta[static_cast<std::size_t>(i)];
        const MatrixXd LiDo = Lam[static_cast<std::size_t>(i)].transpose() * d_obs.asDiagonal();
        for (int j = 0; j < nf; ++j)
            K.block(static_cast<std::int64_t>(i) * inst.src1_dim,
                    static_cast<std::int64_t>(j) * inst.src1_dim, inst.src1_dim, inst.src1_dim) =
                ai * (LiDo * Lam[static_cast<std::size_t>(j)]);
        const auto& mask = spec.layout.mask_Gi[static_cast<std::size_t>(i)];
        for (int m = 0; m < M; ++m)
            for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
                for (int jx = 0; jx < nx; ++jx) {
                    const std::int64_t k =
                        static_cast<std::int64_t>(i) * inst.src1_dim +
                        inst.src1_index(m, p, jx);
                    if (mask.in[static_cast<std::size_t>(jx)])
                        K(k, k) += bi * inst.d_src1(inst.src1_index(m, p, jx)) *
                                   spec.cost_w[static_cast<std::size_t>(m)];
                    else
                        K(k, k) += 1.0;
                }
        rhs.segment(static_cast<std::int64_t>(i) * inst.src1_dim, inst.src1_dim) =
            -ai * (LiDo * (q - packed_target(inst, i)));
    }

    const MatrixXd sym = 0.5 * (K + K.transpose());
    Eigen::LLT<MatrixXd> llt(sym);
    if (llt.info() != Eigen::Success)
        throw SolverError("dense game operator is not positive definite; increase the follower"
                          " penalties beta_i");
    const VectorXd v = K.partialPivLu().solve(rhs);
    return unpack_controls(inst, v);
}

DenseCoupledAdjoint dense_coupled_adjoint(const DenseInstance& inst, const LevelValues& phiT) {
    if (static_cast<std::int64_t>(phiT.size()) != inst.term_dim)
        throw InvariantError("dense_coupled_adjoint: terminal shape mismatch");
    VectorXd pT(inst.term_dim);
    for (std::size_t k = 0; k < phiT.size(); ++k) pT(static_cast<std::int64_t>(k)) = phiT[k];
    CoupledCore core = coupled_core(inst, pT);
    DenseCoupledAdjoint out;
    out.phi = std::move(core.phi);
    out.w = std::move(core.w);
    out.Zc = std::move(core.Zc);
    const int nf = inst.spec.followers();
    for (int i = 0; i < nf; ++i)
        out.psi.push_back(
            core.psi_stacked.segment(static_cast<std::int64_t>(i) * inst.traj_dim,
                                     inst.traj_dim));
    return out;
}

DenseOptimality dense_optimality(const DenseInstance& inst, const LevelValues& y0,
                                 const LeaderControls& leaders) {
    const VectorXd q = dense_state(inst, y0, leaders, FollowerControls::zero(inst.spec));
    OptimalityCore core = optimality_core(inst, q, true);
    DenseOptimality out;
    out.y = std::move(core.y);
    out.v = unpack_controls(inst, core.v_stacked);
    return out;
}

Eigen::MatrixXd dense_gramian(const DenseInstance& inst) {
    MatrixXd G(inst.term_dim, inst.term_dim);
    for (std::int64_t k = 0; k < inst.term_dim; ++k) {
        VectorXd e = VectorXd::Zero(inst.term_dim);
        e(k) = 1.0;
        const CoupledCore ca = coupled_core(inst, e);
        const VectorXd q = inst.T_f * gramian_drift(inst, ca.w) + inst.T_g * ca.Zc;
        const OptimalityCore opt = optimality_core(inst, q, false);
        G.col(k) = opt.y.tail(inst.term_dim);
    }
    return G;
}

DenseHum solve_dense_hum(const DenseInstance& inst, const LevelValues& y0, double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("penalization epsilon must be positive");
    const VectorXd q_free =
        dense_state(inst, y0, LeaderControls::zero(inst.spec), FollowerControls::zero(inst.spec));
    const OptimalityCore free_run = optimality_core(inst, q_free, true);
    const VectorXd yf = free_run.y.tail(inst.term_dim);

    const MatrixXd G = dense_gramian(inst);
    const MatrixXd reg = G + epsilon * MatrixXd::Identity(inst.term_dim, inst.term_dim);
    const VectorXd phi = reg.partialPivLu().solve(-yf);

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (G + G.transpose()));
    if (es.info() != Eigen::Success)
        throw SolverError("dense Gramian eigensolve failed");
    const VectorXd b = es.eigenvectors().transpose() * yf;
    double acc = 0.0;
    for (std::int64_t k = 0; k < b.size(); ++k) {
        const double t = epsilon * b(k) / (es.eigenvalues()(k) + epsilon);
        acc += t * t;
    }
    DenseHum out;
    out.phiT_star.assign(static_cast<std::size_t>(inst.term_dim), 0.0);
    for (std::int64_t k = 0; k < inst.term_dim; ++k)
        out.phiT_star[static_cast<std::size_t>(k)] = phi(k);
    out.predicted_terminal_norm = std::sqrt(inst.c_term * acc);
    out.min_gramian_eig = es.eigenvalues().minCoeff();
    out.max_gramian_eig = es.eigenvalues().maxCoeff();
    return out;
}

ObservabilityReport dense_observability(const GameSpec& spec) {
    const DenseInstance inst = assemble(spec);
    const int M = spec.tgrid.n_steps();
    const int nf = spec.followers();

    // LHS quadrature on psi trajectories (all components, whole domain).
    VectorXd d_lhs = VectorXd::Zero(inst.traj_dim);
    for (int m = 0; m < M; ++m) {
        double wm = spec.tgrid.dt * spec.grid.h /
                    static_cast<double>(std::int64_t{1} << spec.tgrid.level(m));
        if (spec.scenario == Scenario::second_component)
            wm *= expc(-2.0 * spec.weights.log_rho_bar[static_cast<std::size_t>(m)]);
        for (std::int64_t k = inst.traj_off[static_cast<std::size_t>(m)];
             k < inst.traj_off[static_cast<std::size_t>(m + 1)]; ++k)
            d_lhs(k) = wm;
    }
    VectorXd d_w = VectorXd::Zero(inst.src_dim);
    for (int m = 0; m < M; ++m)
        for (std::int64_t p = 0; p < (std::int64_t{1} << spec.tgrid.level(m)); ++p)
            for (int j = 0; j < spec.grid.n_x; ++j)
                if (spec.layout.mask_G0.in[static_cast<std::size_t>(j)]) {
                    const std::int64_t k = inst.traj_index(m, p, 0, j);
                    d_w(k) = inst.d_src(k);
                }

    MatrixXd phi0(2 * spec.grid.n_x, inst.term_dim);
    MatrixXd wall(inst.src_dim, inst.term_dim);
    MatrixXd zall(inst.noise_dim, inst.term_dim);
    MatrixXd pall(static_cast<std::int64_t>(nf) * inst.traj_dim, inst.term_dim);
    for (std::int64_t k = 0; k < inst.term_dim; ++k) {
        VectorXd e = VectorXd::Zero(inst.term_dim);
        e(k) = 1.0;
        const CoupledCore ca = coupled_core(inst, e);
        phi0.col(k) = ca.phi.head(2 * spec.grid.n_x);
        wall.col(k) = ca.w;
        zall.col(k) = ca.Zc;
        pall.col(k) = ca.psi_stacked;
    }

    MatrixXd S = spec.grid.h * (phi0.transpose() * phi0);
    S += pall.transpose() *
         d_lhs.replicate(nf, 1).asDiagonal() * pall;
    MatrixXd Gf = wall.transpose() * d_w.asDiagonal() * wall;
    Gf += zall.transpose() * inst.d_noise.asDiagonal() * zall;
    S = 0.5 * (S + S.transpose()).eval();
    Gf = 0.5 * (Gf + Gf.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<MatrixXd> eg(Gf);
    if (eg.info() != Eigen::Success)
        throw SolverError("dense observability: Gramian form eigensolve failed");
    ObservabilityReport rep;
    rep.min_gramian_eig = eg.eigenvalues().minCoeff() / inst.c_term;
    if (!(eg.eigenvalues().minCoeff() > 0.0))
        throw InvariantError("observability: observed-energy form is singular");
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(S, Gf);
    if (ges.info() != Eigen::Success)
        throw SolverError("dense observability: generalized eigensolve failed");
    rep.max_ratio = ges.eigenvalues().maxCoeff();
    rep.n_probes = 0;
    return rep;
}

} // namespace nashpar
