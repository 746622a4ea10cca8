#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include <Eigen/SVD>

#include "ironloss/harness.hpp"

namespace ironloss {

namespace {

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void record_error(Report& r, const std::string& stage, const std::exception& e) {
    const auto* ie = dynamic_cast<const Error*>(&e);
    r.errors.push_back({{"stage", stage}, {"kind", ie ? ie->kind() : "internal"}, {"message", e.what()}});
}

struct NoisyData {
    Vector y_int, y_bdry;
};

NoisyData draw(const Matrix& f_int, const Matrix& f_bdry, const Vector& x, double gi, double gb, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    NoisyData d;
    // Boundary first so that designs sharing a seed share the boundary noise.
    d.y_bdry = add_noise(f_bdry * x, Vector::Constant(f_bdry.rows(), gb), rng);
    d.y_int = add_noise(f_int * x, Vector::Constant(f_int.rows(), gi), rng);
    return d;
}

// Mean err_rel over the noise repeats for one design, reduced boundary data.
double design_error(const ExperimentConfig& cfg, const ProblemSetup& s, const ReducedBoundaryOp* red,
                    const Matrix& f_int, const Vector& x, double gi, double gb, int tag) {
    const ReducedPosterior post(*s.prior, assemble_reduced_forward(*s.prior, f_int, red, gi, gb));
    double acc = 0.0;
    for (int r = 0; r < cfg.exp2.noise_repeats; ++r) {
        const NoisyData d = draw(f_int, s.f_bdry, x, gi, gb, derive_seed(cfg.seed, 'N', tag, r));
        const Vector yb = red ? reduce_data(*red, d.y_bdry) : Vector();
        acc += reconstruction_error(post.mean(d.y_int, yb), x, s.mass);
    }
    return acc / std::max(1, cfg.exp2.noise_repeats);
}

}  // namespace

Report run_experiment_two(const ExperimentConfig& cfg, const std::string& out_dir) {
    Report rep;
    rep.experiment = "exp2";
    rep.config = cfg.to_json();
    rep.config_hash = cfg.hash();
    rep.seed = cfg.seed;
    const auto& e2 = cfg.exp2;
    StageTimer total;

    StageTimer t_setup;
    const ProblemSetup s = build_setup(cfg, cfg.boundary_in_design);
    const Mesh& mesh = *s.mesh;
    const Vector x = true_source_transformer(mesh, cfg.domain.coils);
    rep.payload["mesh"] = {{"nodes", mesh.num_nodes()}, {"triangles", mesh.num_triangles()}};
    rep.timings["setup"] = t_setup.seconds();

    // Steady temperature rise of the true source (diagnostic only).
    try {
        CholeskyFactor kf(s.stiffness);
        const Vector u = kf.solve(Vector(s.mass * x));
        double core_max = -std::numeric_limits<double>::infinity();
        std::vector<char> coil(mesh.num_nodes(), 0);
        for (int t = 0; t < mesh.num_triangles(); ++t)
            if (mesh.label(t) == Subdomain::Coil)
                for (int v : mesh.triangle(t)) coil[v] = 1;
        for (int i = 0; i < mesh.num_nodes(); ++i)
            if (!coil[i]) core_max = std::max(core_max, u(i));
        rep.payload["steady_state"] = {{"max", u.maxCoeff()}, {"core_max", core_max}};
    } catch (const std::exception& ex) {
        record_error(rep, "steady_state", ex);
    }

    StageTimer t_red;
    std::shared_ptr<const ReducedBoundaryOp> red;
    bool cached = false;
    double gamma_bdry = 1.0, gamma_int = 0.0;
    try {
        red = reduced_boundary(cfg, s, cfg.rank, &cached);
        if (s.f_bdry.rows() > 0) gamma_bdry = 0.01 * cfg.noise_percent * (s.f_bdry * x).cwiseAbs().maxCoeff();
        const SensorDesign g18 = lattice_design(cfg, s.region, e2.rank_sweep_sensors);
        DesignObjectiveConfig oc;
        oc.region = s.region;
        const Matrix fg = DesignProblem(make_context(s, nullptr, 1.0, 1.0), oc).internal_forward(g18);
        gamma_int = 0.01 * cfg.noise_percent * (fg * x).cwiseAbs().maxCoeff();
        if (!(gamma_int > 0.0) || !(gamma_bdry > 0.0)) throw DataError("noise level is zero");
        rep.payload["gamma_int"] = gamma_int;
        rep.payload["gamma_bdry"] = gamma_bdry;
        if (red) {
            rep.payload["reduction"] = {{"rank", red->rank()},
                                        {"power_iters", red->power_iters},
                                        {"oversample", red->oversample},
                                        {"rank_deficient", red->rank_deficient},
                                        {"sigma", std::vector<double>(red->sigma.data(), red->sigma.data() + red->rank())}};
        }
    } catch (const std::exception& ex) {
        record_error(rep, "reduce", ex);
    }
    rep.timings["reduce"] = t_red.seconds();
    rep.timings["reduce_cached"] = cached;

    if (gamma_int > 0.0) {
        StageTimer t;
        const DesignContext ctx = make_context(s, red, gamma_int, gamma_bdry);
        std::set<int> counts(e2.sensor_counts.begin(), e2.sensor_counts.end());
        counts.insert(e2.sweep.begin(), e2.sweep.end());
        Json runs = Json::array();
        std::vector<std::vector<double>> csv, traj_csv;
        for (int m : counts) {
            Json r;
            r["sensors"] = m;
            try {
                const SensorDesign grid = lattice_design(cfg, s.region, m);
                const DesignProblem p = make_design_problem(cfg, ctx, &grid);
                r["grid"] = design_json(grid);
                r["grid_err_rel"] = design_error(cfg, s, red.get(), p.internal_forward(grid), x, gamma_int, gamma_bdry, m);
                r["grid_phi"] = phi_A(p, grid);
                const auto& oc = e2.optimize_counts;
                if (!oc.empty() && std::find(oc.begin(), oc.end(), m) == oc.end()) {
                    const double nan = std::numeric_limits<double>::quiet_NaN();
                    csv.push_back({static_cast<double>(m), r["grid_err_rel"].get<double>(), nan,
                                   r["grid_phi"].get<double>(), nan});
                    runs.push_back(r);
                    continue;
                }
                const OptTrajectory tr = sliding_sensors_optimize(p, grid, cfg.sliding);
                const double opt_err =
                    design_error(cfg, s, red.get(), p.internal_forward(tr.final_design()), x, gamma_int, gamma_bdry, m);
                r["optimized"] = design_json(tr.final_design());
                r["optimized_err_rel"] = opt_err;
                r["trajectory"] = trajectory_json(tr);
                for (const auto& row : trajectory_rows(tr)) {
                    std::vector<double> v{static_cast<double>(m)};
                    v.insert(v.end(), row.begin(), row.end());
                    traj_csv.push_back(std::move(v));
                }
                csv.push_back({static_cast<double>(m), r["grid_err_rel"].get<double>(), opt_err,
                               r["grid_phi"].get<double>(), tr.phi.back()});
            } catch (const std::exception& ex) {
                record_error(rep, "sensors_" + std::to_string(m), ex);
            }
            runs.push_back(r);
        }
        rep.payload["designs"] = runs;
        if (!out_dir.empty()) {
            write_csv(join(out_dir, "exp2_errors.csv"),
                      {"sensors", "grid_err_rel", "optimized_err_rel", "grid_phi", "optimized_phi"}, csv);
            write_csv(join(out_dir, "exp2_trajectories.csv"),
                      {"sensors", "iteration", "phi", "phi_shifted", "step", "grad_norm"}, traj_csv);
        }
        rep.timings["designs"] = t.seconds();
    }

    if (e2.rank_diagnostic && gamma_int > 0.0 && s.f_bdry.rows() > 0) {
        StageTimer t;
        try {
            // Discrepancy of reduced-boundary reconstructions against the
            // full-data posterior mean, same noisy data throughout.
            const SensorDesign g = lattice_design(cfg, s.region, e2.rank_sweep_sensors);
            DesignObjectiveConfig oc;
            oc.region = s.region;
            const Matrix f_int = DesignProblem(make_context(s, nullptr, 1.0, 1.0), oc).internal_forward(g);
            const NoisyData d = draw(f_int, s.f_bdry, x, gamma_int, gamma_bdry, derive_seed(cfg.seed, 'R', 1));

            Matrix f_all(f_int.rows() + s.f_bdry.rows(), f_int.cols());
            f_all << f_int, s.f_bdry;
            Vector var(f_all.rows());
            var << Vector::Constant(f_int.rows(), gamma_int * gamma_int),
                Vector::Constant(s.f_bdry.rows(), gamma_bdry * gamma_bdry);
            Vector y(f_all.rows());
            y << d.y_int, d.y_bdry;
            const Vector full = posterior_mean(*s.prior, f_all, var, y, PosteriorPath::Woodbury);

            const LinearOperator fpr = prior_condition(s.f_bdry, s.prior->factor);
            const Matrix fpr_dense = fpr.apply_transpose(Matrix::Identity(fpr.rows, fpr.rows)).transpose();
            const Eigen::BDCSVD<Matrix> svd(fpr_dense);
            const int nrank = numerical_rank(svd.singularValues());

            std::vector<int> ranks = e2.rank_sweep;
            ranks.push_back(nrank);
            std::sort(ranks.begin(), ranks.end());
            ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
            Json rows = Json::array();
            std::vector<std::vector<double>> csv;
            for (int r : ranks) {
                const ReducedBoundaryOp op = reduce_boundary_operator(fpr, r, cfg.power_iters,
                                                                      derive_seed(cfg.seed, 0x5244, r), cfg.oversample);
                const ReducedPosterior post(*s.prior, assemble_reduced_forward(*s.prior, f_int, &op, gamma_int, gamma_bdry));
                const Vector est = post.mean(d.y_int, reduce_data(op, d.y_bdry));
                const double disc = std::sqrt((est - full).dot(s.mass * (est - full)) / full.dot(s.mass * full));
                rows.push_back({{"rank", r}, {"discrepancy", disc}, {"numerical_rank", r == nrank}});
                csv.push_back({static_cast<double>(r), disc, r == nrank ? 1.0 : 0.0});
            }
            const Vector& sv = svd.singularValues();
            rep.payload["rank_sweep"] = {{"numerical_rank", nrank},
                                         {"full_rank_rows", fpr.rows},
                                         {"sensors", e2.rank_sweep_sensors},
                                         {"singular_values", std::vector<double>(sv.data(), sv.data() + sv.size())},
                                         {"runs", rows}};
            if (!out_dir.empty())
                write_csv(join(out_dir, "exp2_rank_sweep.csv"), {"rank", "discrepancy", "numerical_rank"}, csv);
        } catch (const std::exception& ex) {
            record_error(rep, "rank_sweep", ex);
        }
        rep.timings["rank_sweep"] = t.seconds();
    }

    rep.timings["total"] = total.seconds();
    if (!out_dir.empty()) write_json(join(out_dir, "exp2_report.json"), rep.to_json());
    return rep;
}

}  // namespace ironloss
