#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ironloss/harness.hpp"

namespace ironloss {

namespace {

bool wants(const ExperimentConfig& cfg, const std::string& stage) {
    const auto& s = cfg.exp1.stages;
    return std::find(s.begin(), s.end(), stage) != s.end();
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

Matrix noisy(const Matrix& clean, double gamma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix y = clean;
    for (Eigen::Index j = 0; j < y.cols(); ++j)
        for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, j) += gamma * nd(rng);
    return y;
}

// Boundary-only reconstruction error for one forward block.
Json boundary_only(const ProblemSetup& s, const Matrix& f, const Vector& x, double percent, std::uint64_t seed) {
    const Vector clean = f * x;
    const NoiseModel noise = calibrate_noise(Vector(), clean, percent);
    std::mt19937_64 rng(seed);
    const Vector y = add_noise(clean, Vector::Constant(clean.size(), noise.gamma_bdry), rng);
    const Vector est = posterior_mean(*s.prior, f, Vector::Constant(clean.size(), noise.gamma_bdry * noise.gamma_bdry), y,
                                      PosteriorPath::Woodbury);
    return {{"rows", f.rows()}, {"gamma", noise.gamma_bdry}, {"err_rel", reconstruction_error(est, x, s.mass)}};
}

std::vector<double> mean_errors(const ProblemSetup& s, const Matrix& f, double gamma, const Matrix& sources,
                                std::uint64_t seed) {
    const Matrix y = noisy(f * sources, gamma, seed);
    const Matrix est = posterior_means(*s.prior, f, Vector::Constant(f.rows(), gamma * gamma), y);
    std::vector<double> e(sources.cols());
    for (Eigen::Index j = 0; j < sources.cols(); ++j) e[j] = reconstruction_error(est.col(j), sources.col(j), s.mass);
    return e;
}

double mean(const std::vector<double>& v) {
    double a = 0.0;
    for (double x : v) a += x;
    return v.empty() ? 0.0 : a / static_cast<double>(v.size());
}

void record_error(Report& r, const std::string& stage, const std::exception& e) {
    const auto* ie = dynamic_cast<const Error*>(&e);
    r.errors.push_back({{"stage", stage}, {"kind", ie ? ie->kind() : "internal"}, {"message", e.what()}});
}

}  // namespace

Report run_experiment_one(const ExperimentConfig& cfg, const std::string& out_dir) {
    Report rep;
    rep.experiment = "exp1";
    rep.config = cfg.to_json();
    rep.config_hash = cfg.hash();
    rep.seed = cfg.seed;
    const auto& e1 = cfg.exp1;
    StageTimer total;

    StageTimer t_setup;
    const ProblemSetup s = build_setup(cfg, wants(cfg, "a"));
    const Mesh& mesh = *s.mesh;
    rep.payload["mesh"] = {{"nodes", mesh.num_nodes()}, {"triangles", mesh.num_triangles()}};
    rep.timings["setup"] = t_setup.seconds();

    Matrix sources(mesh.num_nodes(), e1.sources);
    for (int k = 0; k < e1.sources; ++k) sources.col(k) = generate_random_source(mesh, derive_seed(cfg.seed, 'S', k));
    const Vector bump = generate_random_source(mesh, e1.bump_seed, 1);

    // ---- (a) steady vs transient, boundary pixels only
    if (wants(cfg, "a")) {
        StageTimer t;
        try {
            const double tau = thermal_time_constant(s.mass_rho, s.stiffness);
            TimeGrid steady;
            steady.final_time = e1.steady_factor * tau;
            steady.observations = 1;
            steady.substeps = std::max(1, static_cast<int>(std::ceil(steady.final_time / s.grid.dt())));
            const MidpointPropagator sp(s.mass_rho, s.stiffness, steady);
            const Matrix f_steady = assemble_forward_rows(s.mass, sp, s.boundary.rows);
            Json a;
            a["thermal_time_constant"] = tau;
            a["steady_time"] = steady.final_time;
            a["pixels"] = s.boundary.size();
            a["transient"] = boundary_only(s, s.f_bdry, bump, cfg.noise_percent, derive_seed(cfg.seed, 'A', 0));
            a["steady"] = boundary_only(s, f_steady, bump, cfg.noise_percent, derive_seed(cfg.seed, 'A', 1));
            a["transient_better"] = a["transient"]["err_rel"].get<double>() < a["steady"]["err_rel"].get<double>();
            rep.payload["stage_a"] = a;
            if (!out_dir.empty()) {
                write_csv(join(out_dir, "exp1_stage_a.csv"), {"case", "rows", "gamma", "err_rel"},
                          {{0.0, a["transient"]["rows"].get<double>(), a["transient"]["gamma"].get<double>(),
                            a["transient"]["err_rel"].get<double>()},
                           {1.0, a["steady"]["rows"].get<double>(), a["steady"]["gamma"].get<double>(),
                            a["steady"]["err_rel"].get<double>()}});
            }
        } catch (const std::exception& ex) {
            record_error(rep, "a", ex);
        }
        rep.timings["stage_a"] = t.seconds();
    }

    const bool interior = wants(cfg, "b") || wants(cfg, "c") || wants(cfg, "d");
    if (!interior) {
        rep.timings["total"] = total.seconds();
        if (!out_dir.empty()) write_json(join(out_dir, "exp1_report.json"), rep.to_json());
        return rep;
    }

    const SensorDesign grid = unit_square_grid(cfg, e1.grid_per_axis);
    std::optional<DesignProblem> base;
    double gamma_int = 0.0;
    try {
        // Interior noise level: fixed across designs, set from the grid design.
        DesignContext probe = make_context(s, nullptr, 1.0, 1.0);
        DesignObjectiveConfig oc;
        oc.region = s.region;
        const Matrix fg = DesignProblem(probe, oc).internal_forward(grid);
        std::vector<double> maxima;
        if (e1.sources > 0) {
            for (int k = 0; k < e1.sources; ++k) maxima.push_back((fg * sources.col(k)).cwiseAbs().maxCoeff());
        } else {
            maxima.push_back((fg * bump).cwiseAbs().maxCoeff());
        }
        gamma_int = 0.01 * cfg.noise_percent * median(maxima);
        if (!(gamma_int > 0.0)) throw DataError("interior noise level is zero");
        rep.payload["gamma_int"] = gamma_int;
        base.emplace(make_design_problem(cfg, make_context(s, nullptr, gamma_int, 1.0), &grid));
    } catch (const std::exception& ex) {
        record_error(rep, "setup", ex);
    }

    std::optional<SensorDesign> optimized;
    if (base && wants(cfg, "b")) {
        StageTimer t;
        try {
            const OptTrajectory tr = sliding_sensors_optimize(*base, grid, cfg.sliding);
            bool monotone = true;
            for (std::size_t k = 1; k < tr.phi.size(); ++k) monotone = monotone && tr.phi[k] <= tr.phi[k - 1];
            Json b = trajectory_json(tr);
            b["overlap_weight"] = base->config().overlap_weight;
            b["monotone"] = monotone;
            b["decreased"] = tr.phi.back() < tr.phi.front();
            rep.payload["stage_b"] = b;
            optimized = tr.final_design();
            if (!out_dir.empty()) {
                write_csv(join(out_dir, "exp1_trajectory.csv"), {"iteration", "phi", "phi_shifted", "step", "grad_norm"},
                          trajectory_rows(tr));
            }
        } catch (const std::exception& ex) {
            record_error(rep, "b", ex);
        }
        rep.timings["stage_b"] = t.seconds();
    }

    if (base && wants(cfg, "c")) {
        StageTimer t;
        try {
            DesignObjectiveConfig plain = base->config();
            plain.overlap_weight = 0.0;
            const DesignProblem sp = base->with_config(plain);
            const SensorDesign cands = candidate_grid(cfg, s.region, e1.candidate_grid);
            const WeightedDesignObjective obj(sp, cands, cfg.sparsify.span_tol);

            // Penalty scale search for the requested survivor count: geometric
            // bracketing, then bisection in log scale.
            Json runs = Json::array();
            std::optional<SparsificationState> best;
            double best_scale = 0.0;
            auto run = [&](double scale) {
                SparsifyConfig sc = cfg.sparsify;
                sc.penalty_scale = scale;
                SparsificationState st = sparsify_design(obj, cands, sc);
                const int n = static_cast<int>(st.selected.size());
                runs.push_back({{"penalty_scale", scale}, {"survivors", n}, {"binary", st.binary},
                                {"stages", st.gamma_schedule.size()}, {"evaluations", st.evaluations}});
                const auto gap = [&](int k) { return std::abs(k - e1.target_survivors); };
                if (!best || gap(n) < gap(static_cast<int>(best->selected.size())) ||
                    (gap(n) == gap(static_cast<int>(best->selected.size())) && n > static_cast<int>(best->selected.size()))) {
                    best = std::move(st);
                    best_scale = scale;
                }
                return n;
            };
            double lo = cfg.sparsify.penalty_scale, hi = lo;
            int n = run(lo);
            int budget = e1.bisection_steps;
            if (n > e1.target_survivors) {
                while (n > e1.target_survivors && budget-- > 0) {
                    lo = hi;
                    hi *= 4.0;
                    n = run(hi);
                }
            } else if (n < e1.target_survivors) {
                while (n < e1.target_survivors && budget-- > 0) {
                    hi = lo;
                    lo /= 4.0;
                    n = run(lo);
                }
            }
            // Invariant: survivors(lo) >= target >= survivors(hi).
            while (static_cast<int>(best->selected.size()) != e1.target_survivors && budget-- > 0 && hi > lo) {
                const double mid = std::sqrt(lo * hi);
                n = run(mid);
                (n > e1.target_survivors ? lo : hi) = mid;
            }

            const SparsificationState& st = *best;
            const SensorDesign sel = st.selected_design();
            Json c;
            c["candidates"] = cands.count();
            c["penalty_scale"] = best_scale;
            c["searches"] = runs;
            c["survivors"] = sel.count();
            c["binary"] = st.binary;
            c["gamma_schedule"] = st.gamma_schedule;
            c["q_schedule"] = st.q_schedule;
            c["selected"] = design_json(sel);
            c["phi_sparse"] = phi_A(sp, sel);

            // Sliding refinement seeded at the sparsification output, on the
            // same objective (overlap penalty included) for both values.
            if (sel.count() > 0) {
                const DesignProblem rp = make_design_problem(cfg, sp.context(), &sel);
                const OptTrajectory tr = sliding_sensors_optimize(rp, sel, cfg.sliding);
                c["refine"] = trajectory_json(tr);
                c["overlap_weight"] = rp.config().overlap_weight;
                c["phi_seed"] = tr.phi.front();
                c["phi_refined"] = tr.phi.back();
                c["refine_decreased"] = tr.phi.back() < tr.phi.front();
                if (!out_dir.empty()) {
                    write_csv(join(out_dir, "exp1_sparsify_refine.csv"),
                              {"iteration", "phi", "phi_shifted", "step", "grad_norm"}, trajectory_rows(tr));
                }
            }
            rep.payload["stage_c"] = c;
            if (!out_dir.empty()) {
                std::vector<std::vector<double>> rows;
                for (int i = 0; i < cands.count(); ++i) {
                    const bool on = std::find(st.selected.begin(), st.selected.end(), i) != st.selected.end();
                    rows.push_back({cands.positions[i].x(), cands.positions[i].y(), st.weights(i), on ? 1.0 : 0.0});
                }
                write_csv(join(out_dir, "exp1_sparsify.csv"), {"x", "y", "weight", "selected"}, rows);
            }
        } catch (const std::exception& ex) {
            record_error(rep, "c", ex);
        }
        rep.timings["stage_c"] = t.seconds();
    }

    if (base && wants(cfg, "d")) {
        StageTimer t;
        try {
            DesignObjectiveConfig abs_cfg = base->config();
            abs_cfg.overlap_weight = 0.0;
            abs_cfg.drop_constant = false;
            const DesignProblem ap = base->with_config(abs_cfg);

            std::mt19937_64 rng(derive_seed(cfg.seed, 'P'));
            std::uniform_real_distribution<double> pert(-e1.perturbation, e1.perturbation);
            std::vector<SensorDesign> designs;
            for (int k = 0; k < e1.configs; ++k) {
                SensorDesign d = grid;
                for (auto& p : d.positions) p = s.region.project(p + Point(pert(rng), pert(rng)));
                designs.push_back(std::move(d));
            }
            if (optimized) designs.push_back(*optimized);

            Json rows = Json::array();
            std::vector<double> phis, errs;
            std::vector<std::vector<double>> csv;
            for (std::size_t k = 0; k < designs.size(); ++k) {
                const bool opt = optimized && k + 1 == designs.size();
                const double phi = phi_A(ap, designs[k]);
                double err = 0.0;
                if (e1.sources > 0) {
                    const Matrix f = ap.internal_forward(designs[k]);
                    err = mean(mean_errors(s, f, gamma_int, sources, derive_seed(cfg.seed, 'N', k)));
                }
                rows.push_back({{"config", k}, {"optimized", opt}, {"phi", phi}, {"mean_err_rel", err}});
                csv.push_back({static_cast<double>(k), opt ? 1.0 : 0.0, phi, err});
                if (!opt) {
                    phis.push_back(phi);
                    errs.push_back(err);
                }
            }
            Json d;
            d["sources"] = e1.sources;
            d["configs"] = rows;
            if (e1.sources > 0) {
                d["spearman"] = spearman(phis, errs);
                if (optimized) {
                    const double eo = csv.back()[3];
                    const auto below = std::count_if(errs.begin(), errs.end(), [&](double e) { return e < eo; });
                    const auto phi_below = std::count_if(phis.begin(), phis.end(), [&](double p) { return p < csv.back()[2]; });
                    d["optimized_mean_err_rel"] = eo;
                    d["optimized_fraction_better"] = errs.empty() ? 0.0 : static_cast<double>(below) / errs.size();
                    d["optimized_phi_fraction_better"] = phis.empty() ? 0.0 : static_cast<double>(phi_below) / phis.size();
                }
            }
            rep.payload["stage_d"] = d;
            if (!out_dir.empty())
                write_csv(join(out_dir, "exp1_scatter.csv"), {"config", "optimized", "phi", "mean_err_rel"}, csv);
        } catch (const std::exception& ex) {
            record_error(rep, "d", ex);
        }
        rep.timings["stage_d"] = t.seconds();
    }

    rep.timings["total"] = total.seconds();
    if (!out_dir.empty()) write_json(join(out_dir, "exp1_report.json"), rep.to_json());
    return rep;
}

}  // namespace ironloss
