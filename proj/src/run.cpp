#include "nashpar/run.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include "nashpar/config.hpp"
#include "nashpar/errors.hpp"
#include "nashpar/oracle.hpp"
#include "nashpar/record.hpp"

namespace nashpar {

namespace {

AdaptedField random_field(const GameSpec& spec, int n_comp, int last, std::mt19937_64& rng) {
    AdaptedField f(spec.tgrid, spec.tree, n_comp, spec.grid.n_x, last);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int m = 0; m <= last; ++m)
        for (auto& x : f.slice(m)) x = u(rng);
    return f;
}

LeaderControls random_leaders(const GameSpec& spec, std::mt19937_64& rng) {
    const int M = spec.tgrid.n_steps();
    LeaderControls out;
    out.u1 = random_field(spec, 1, M - 1, rng);
    out.u2 = random_field(spec, 1, M - 1, rng);
    out.u3 = random_field(spec, 1, M - 1, rng);
    return out;
}

LevelValues random_slice(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LevelValues v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

LevelValues random_terminal(const GameSpec& spec, std::mt19937_64& rng) {
    const auto leaves = spec.tree.nodes_at(spec.tree.K);
    return random_slice(slice_size(leaves, 2, spec.grid.n_x), rng);
}

double field_diff(const AdaptedField& a, const AdaptedField& b) {
    AdaptedField d = a;
    d.axpy(-1.0, b);
    return d.max_abs();
}

double controls_diff(const FollowerControls& a, const FollowerControls& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        worst = std::max(worst, field_diff(a.v[i], b.v[i]));
    return worst;
}

bool run_nash_solve(const CliOptions& opt, RunConfig& cfg, RunRecord& rec) {
    const GameSpec& spec = cfg.spec;
    const LeaderControls leaders = LeaderControls::zero(spec);
    const NashSolution fp = solve_nash_fixed_point(spec, cfg.y0, leaders);
    const NashSolution ad = nash_from_adjoint(spec, cfg.y0, leaders);
    const double cross = controls_diff(fp.v_star, ad.v_star);

    Table& t = rec.add_table("nash_residuals",
                             {"follower", "fixed_point_residual", "adjoint_residual"});
    double worst_fp = 0.0, worst_ad = 0.0;
    for (int i = 0; i < spec.followers(); ++i) {
        t.row({static_cast<double>(i + 1), fp.residuals[static_cast<std::size_t>(i)],
               ad.residuals[static_cast<std::size_t>(i)]});
        worst_fp = std::max(worst_fp, fp.residuals[static_cast<std::size_t>(i)]);
        worst_ad = std::max(worst_ad, ad.residuals[static_cast<std::size_t>(i)]);
    }
    rec.metric("fixed_point_iterations", fp.iterations);
    rec.metric("adjoint_iterations", ad.iterations);
    rec.metric("cross_method_diff", cross);
    rec.check("fixed_point_residual_below_tol", worst_fp <= spec.nash_tol);
    rec.check("adjoint_residual_below_tol", worst_ad <= spec.nash_tol);
    rec.check("methods_agree", cross <= 10.0 * spec.nash_tol);
    (void)opt;
    return rec.all_passed();
}

bool run_leader_solve(const CliOptions& opt, RunConfig& cfg, RunRecord& rec) {
    const GameSpec& spec = cfg.spec;
    const HumSolution sol = solve_leader(spec, cfg.y0, cfg.hum);
    const double scale = data_scale(spec, cfg.y0, sol.leaders);
    const std::vector<double> res = nash_residual(spec, cfg.y0, sol.leaders, sol.followers);

    Table& t = rec.add_table("leader_summary",
                             {"epsilon", "terminal_norm", "identity_residual", "J",
                              "cg_iterations"});
    t.row({cfg.hum.epsilon, sol.terminal_norm, sol.identity_residual, sol.J_value,
           static_cast<double>(sol.cg_iterations)});
    Table& tn = rec.add_table("hierarchy_residuals", {"follower", "nash_residual"});
    double worst = 0.0;
    for (int i = 0; i < spec.followers(); ++i) {
        tn.row({static_cast<double>(i + 1), res[static_cast<std::size_t>(i)]});
        worst = std::max(worst, res[static_cast<std::size_t>(i)]);
    }
    rec.metric("terminal_norm", sol.terminal_norm);
    rec.metric("identity_residual", sol.identity_residual);
    rec.check("penalized_identity", sol.identity_residual <= 10.0 * cfg.hum.cg_tol * scale);
    rec.check("hierarchy_closes", worst <= 1e-8);
    (void)opt;
    return rec.all_passed();
}

bool run_epsilon_sweep(const CliOptions& opt, RunConfig& cfg, RunRecord& rec) {
    const EpsilonSweepResult res = epsilon_sweep(cfg.spec, cfg.y0, cfg.eps_list, cfg.hum);
    Table& t = rec.add_table("epsilon_sweep", {"epsilon", "terminal_norm", "u1_norm", "u2_norm",
                                               "u3_norm", "J"});
    for (const auto& r : res.rows)
        t.row({r.epsilon, r.terminal_norm, r.u1_norm, r.u2_norm, r.u3_norm, r.J});
    rec.metric("slope", res.slope);
    rec.metric("max_control_norm", res.max_control_norm);
    (void)opt;
    return rec.all_passed();
}

bool run_duality_check(const CliOptions& opt, RunConfig& cfg, RunRecord& rec) {
    const GameSpec& spec = cfg.spec;
    std::mt19937_64 rng(opt.seed);
    Table& t = rec.add_table("duality", {"draw", "residual"});
    double worst = 0.0;
    const int n_draws = 20;
    for (int d = 0; d < n_draws; ++d) {
        const LevelValues y0 = random_slice(static_cast<std::size_t>(2 * spec.grid.n_x), rng);
        const LeaderControls leaders = random_leaders(spec, rng);
        const LevelValues phiT = random_terminal(spec, rng);
        const OptimalitySolution sol = solve_optimality_system(spec, y0, leaders);
        const CoupledAdjointSolution adj = solve_coupled_adjoint(spec, phiT);
        const double r = duality_residual(spec, y0, leaders, sol.y, adj);
        t.row({static_cast<double>(d + 1), r});
        worst = std::max(worst, r);
    }
    rec.metric("max_residual", worst);
    rec.check("duality_residual_below_tol", worst <= 1e-10);
    return rec.all_passed();
}

bool run_weights_report(const CliOptions& opt, RunConfig& cfg, RunRecord& rec) {
    const WeightTables& w = cfg.spec.weights;
    Table& t = rec.add_table("weights", {"m", "t", "gamma", "ell", "log_rho_star",
                                         "log_rho_bar"});
    for (int m = 0; m < w.n_t; ++m)
        t.row({static_cast<double>(m), cfg.spec.tgrid.t(m), w.gamma[static_cast<std::size_t>(m)],
               w.ell[static_cast<std::size_t>(m)], w.log_rho_star[static_cast<std::size_t>(m)],
               w.log_rho_bar[static_cast<std::size_t>(m)]});
    const InequalityReport rep = check_weight_inequalities(w, cfg.spec.tgrid);
    rec.metric("c1", rep.c1);
    rec.metric("c2", rep.c2);
    rec.metric("c3", rep.c3);
    rec.metric("c4", rep.c4);
    rec.metric("c5", rep.c5);
    rec.check("constants_finite", rep.pass);
    rec.check("rho_theta_bound", rep.rho_bound_ok);
    (void)opt;
    return rec.all_passed();
}

bool run_observability(const CliOptions& opt, RunConfig& cfg, RunRecord& rec) {
    const ObservabilityReport rep =
        observability_rayleigh(cfg.spec, cfg.n_probes, cfg.obs_mode, opt.seed);
    Table& t = rec.add_table("observability", {"max_ratio", "min_gramian_eig", "n_probes"});
    t.row({rep.max_ratio, rep.min_gramian_eig, static_cast<double>(rep.n_probes)});
    rec.metric("max_ratio", rep.max_ratio);
    rec.metric("min_gramian_eig", rep.min_gramian_eig);
    rec.check("ratio_finite", std::isfinite(rep.max_ratio));
    if (cfg.obs_mode == ObservabilityMode::dense)
        rec.check("gramian_positive", rep.min_gramian_eig > 0.0);
    return rec.all_passed();
}

bool run_oracle_compare(const CliOptions& opt, RunConfig& cfg, RunRecord& rec) {
    const GameSpec& spec = cfg.spec;
    const DenseInstance inst = assemble(spec);
    std::mt19937_64 rng(opt.seed);

    const LevelValues y0 = cfg.y0;
    const LeaderControls leaders = random_leaders(spec, rng);
    FollowerControls followers = FollowerControls::zero(spec);
    for (auto& v : followers.v) v = random_field(spec, 1, spec.tgrid.n_steps() - 1, rng);

    // Forward sweep against the composed matrices.
    const AdaptedField y_it = solve_state(spec, y0, leaders, followers);
    const Eigen::VectorXd y_dn = dense_state(inst, y0, leaders, followers);
    const double state_diff = field_diff(y_it, unpack_trajectory(inst, y_dn));

    // Backward sweep on random terminal data and drift sources.
    const AdaptedField r_field = random_field(spec, 2, spec.tgrid.n_steps() - 1, rng);
    const LevelValues zT = random_terminal(spec, rng);
    SourceSpec src;
    src.drift = &r_field;
    const BackwardResult bw_it = backward_sweep(spec.context(), src, 2, zT);
    const DenseBackward bw_dn = dense_backward(inst, zT, pack_source(inst, r_field));
    const double backward_diff = field_diff(bw_it.z, unpack_trajectory(inst, bw_dn.z));

    // Equilibria by all three routes, pairwise.
    const NashSolution fp = solve_nash_fixed_point(spec, y0, leaders);
    const NashSolution ad = nash_from_adjoint(spec, y0, leaders);
    const FollowerControls dn = solve_dense_nash(inst, y0, leaders);
    const double nash_diff = std::max({controls_diff(fp.v_star, ad.v_star),
                                       controls_diff(fp.v_star, dn), controls_diff(ad.v_star, dn)});

    // Coupled adjoint on a random terminal pair.
    const LevelValues phiT = random_terminal(spec, rng);
    const CoupledAdjointSolution ca_it = solve_coupled_adjoint(spec, phiT);
    const DenseCoupledAdjoint ca_dn = dense_coupled_adjoint(inst, phiT);
    const double coupled_diff = field_diff(ca_it.phi, unpack_trajectory(inst, ca_dn.phi));

    // Leader synthesis, iterative vs normal equations.
    const HumSolution hum_it = solve_leader(spec, y0, cfg.hum);
    const DenseHum hum_dn = solve_dense_hum(inst, y0, cfg.hum.epsilon);
    double hum_phi_diff = 0.0;
    for (std::size_t k = 0; k < hum_it.phiT_star.size(); ++k)
        hum_phi_diff = std::max(hum_phi_diff,
                                std::abs(hum_it.phiT_star[k] - hum_dn.phiT_star[k]));
    const double hum_norm_diff =
        std::abs(hum_it.terminal_norm - hum_dn.predicted_terminal_norm);

    const Eigen::MatrixXd G = dense_gramian(inst);
    const double gramian_asym = (G - G.transpose()).cwiseAbs().maxCoeff();

    Table& t = rec.add_table("oracle_compare",
                             {"state_diff", "backward_diff", "nash_diff", "coupled_diff",
                              "hum_phi_diff", "hum_norm_diff", "gramian_asym"});
    t.row({state_diff, backward_diff, nash_diff, coupled_diff, hum_phi_diff, hum_norm_diff,
           gramian_asym});
    rec.check("state_matches", state_diff <= 1e-11);
    rec.check("backward_matches", backward_diff <= 1e-11);
    rec.check("nash_matches", nash_diff <= 1e-8);
    rec.check("coupled_adjoint_matches", coupled_diff <= 1e-9);
    rec.check("hum_phi_matches", hum_phi_diff <= 1e-7);
    rec.check("hum_norm_matches", hum_norm_diff <= 1e-9);
    rec.check("gramian_symmetric", gramian_asym <= 1e-10);
    return rec.all_passed();
}

} // namespace

std::string cli_usage() {
    return "usage: nashpar <subcommand> --config PATH [--out DIR] [--parallel N] [--seed U64]\n"
           "subcommands:\n"
           "  nash-solve      follower equilibrium by both iterative methods, cross-checked\n"
           "  leader-solve    penalized leader synthesis plus hierarchy consistency\n"
           "  epsilon-sweep   leader synthesis over the configured epsilon ladder\n"
           "  duality-check   randomized forward/backward duality residuals\n"
           "  weights-report  weight tables and inequality constants\n"
           "  observability   sampled or dense observability diagnostics\n"
           "  oracle-compare  iterative pipelines against the dense matrices\n";
}

CliOptions parse_cli(int argc, const char* const* argv) {
    if (argc < 1) throw ValidationError("missing subcommand\n" + cli_usage());
    CliOptions opt;
    opt.subcommand = argv[0];
    bool have_config = false;
    for (int k = 1; k < argc; ++k) {
        const std::string flag = argv[k];
        auto next = [&]() -> std::string {
            if (k + 1 >= argc) throw ValidationError("flag " + flag + " expects a value");
            return argv[++k];
        };
        if (flag == "--config") {
            opt.config_path = next();
            have_config = true;
        } else if (flag == "--out") {
            opt.out_dir = next();
        } else if (flag == "--parallel") {
            const std::string v = next();
            try {
                opt.parallel = std::stoi(v);
            } catch (const std::exception&) {
                throw ValidationError("--parallel expects an integer, got '" + v + "'");
            }
            if (opt.parallel < 1) throw ValidationError("--parallel must be at least 1");
        } else if (flag == "--seed") {
            const std::string v = next();
            try {
                opt.seed = std::stoull(v);
            } catch (const std::exception&) {
                throw ValidationError("--seed expects an unsigned integer, got '" + v + "'");
            }
        } else {
            throw ValidationError("unknown flag '" + flag + "'\n" + cli_usage());
        }
    }
    if (!have_config) throw ValidationError("missing --config PATH\n" + cli_usage());
    return opt;
}

int run_cli(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    using Runner = bool (*)(const CliOptions&, RunConfig&, RunRecord&);
    Runner runner = nullptr;
    if (opt.subcommand == "nash-solve") runner = run_nash_solve;
    else if (opt.subcommand == "leader-solve") runner = run_leader_solve;
    else if (opt.subcommand == "epsilon-sweep") runner = run_epsilon_sweep;
    else if (opt.subcommand == "duality-check") runner = run_duality_check;
    else if (opt.subcommand == "weights-report") runner = run_weights_report;
    else if (opt.subcommand == "observability") runner = run_observability;
    else if (opt.subcommand == "oracle-compare") runner = run_oracle_compare;
    if (!runner) {
        err << "error: unknown subcommand '" << opt.subcommand << "'\n" << cli_usage();
        return 2;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        RunConfig cfg = load_config(opt.config_path, &err);
        cfg.spec.exec = ExecPolicy::with_threads(opt.parallel);
        RunRecord rec(opt.subcommand, cfg.echo);
        const bool pass = runner(opt, cfg, rec);
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.write(opt.out_dir, wall);
        out << opt.subcommand << ": " << (pass ? "pass" : "fail") << " (" << opt.out_dir
            << ")\n";
        return pass ? 0 : 4;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const InvariantError& e) {
        err << "invariant failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "invariant failure: " << e.what() << "\n";
        return 4;
    }
}

} // namespace nashpar
