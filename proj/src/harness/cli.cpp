#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ironloss/harness.hpp"

namespace ironloss {

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::optional<int> rank;
    std::optional<int> sensors;
    std::optional<std::string> mode;
    std::string design;
    std::string data;
};

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

ExperimentConfig resolve(const Options& o, const std::string& experiment) {
    ExperimentConfig c;
    if (!o.config.empty()) c = load_config(o.config, experiment);
    else c = default_config(experiment.empty() ? "exp1" : experiment);
    if (o.seed) c.seed = *o.seed;
    if (o.rank) c.rank = *o.rank;
    if (o.mode) c.mode = parse_seminorm(*o.mode);
    c.validate();
    return c;
}

int default_sensors(const ExperimentConfig& c) {
    return c.experiment == "exp1" ? c.exp1.grid_per_axis * c.exp1.grid_per_axis : c.exp2.sensor_counts.front();
}

SensorDesign resolve_design(const Options& o, const ExperimentConfig& c, const ProblemSetup& s) {
    if (!o.design.empty()) {
        std::ifstream in(o.design);
        if (!in) throw IoError("cannot read design " + o.design);
        std::stringstream ss;
        ss << in.rdbuf();
        return design_from_json(ss.str());
    }
    const int k = o.sensors.value_or(default_sensors(c));
    if (k < 0) throw ConfigError("--sensors must be nonnegative");
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k))));
    if (c.experiment == "exp1" && side * side == k) return unit_square_grid(c, side);
    return lattice_design(c, s.region, k);
}

Vector source_for(const ExperimentConfig& c, const Mesh& mesh) {
    if (c.experiment == "exp2") return true_source_transformer(mesh, c.domain.coils);
    return generate_random_source(mesh, derive_seed(c.seed, 'S', 0));
}

Json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const Json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void emit(const Json& j) { std::cout << j.dump() << std::endl; }

ForwardBlocks blocks_for(const ProblemSetup& s, const SensorDesign& d) {
    ForwardBlocks b;
    b.internal = assemble_forward_rows(s.mass, *s.propagator, build_internal_sensor_rows(*s.mesh, d).rows);
    b.boundary = s.f_bdry;
    b.m_int = d.count();
    b.m_bdry = s.boundary.size();
    b.m_t = s.grid.observations;
    return b;
}

int cmd_mesh(const Options& o) {
    const ExperimentConfig c = resolve(o, "");
    const Mesh mesh = build_mesh(c.domain);
    std::filesystem::create_directories(o.out);
    const std::string path = join(o.out, "mesh.txt");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    write_mesh(out, mesh);
    emit({{"mesh", path}, {"nodes", mesh.num_nodes()}, {"triangles", mesh.num_triangles()},
          {"boundary_edges", mesh.boundary_edges().size()}, {"interface_edges", mesh.interface_edges().size()}});
    return 0;
}

int cmd_forward(const Options& o) {
    const ExperimentConfig c = resolve(o, "");
    const ProblemSetup s = build_setup(c, c.boundary_in_design);
    const SensorDesign d = resolve_design(o, c, s);
    d.validate();
    const ForwardBlocks b = blocks_for(s, d);
    const Vector x = source_for(c, *s.mesh);
    const NoiseModel noise = calibrate_noise(b, x, c.noise_percent);
    const Vector y = simulate_measurements(b, x, noise, derive_seed(c.seed, 'F'));
    Json j;
    j["schema"] = "ironloss.data/1";
    j["config_hash"] = c.hash();
    j["seed"] = c.seed;
    j["design"] = Json::parse(design_to_json(d));
    j["observations"] = b.m_t;
    j["internal_rows"] = b.internal.rows();
    j["boundary_rows"] = b.boundary.rows();
    j["gamma_int"] = noise.gamma_int;
    j["gamma_bdry"] = noise.gamma_bdry;
    j["y"] = vec_json(y);
    j["x_true"] = vec_json(x);
    std::filesystem::create_directories(o.out);
    const std::string path = join(o.out, "data.json");
    write_json(path, j);
    emit({{"data", path}, {"rows", y.size()}, {"gamma_int", noise.gamma_int}, {"gamma_bdry", noise.gamma_bdry}});
    return 0;
}

int cmd_reconstruct(const Options& o) {
    if (o.data.empty()) throw ConfigError("reconstruct needs --data");
    std::ifstream in(o.data);
    if (!in) throw IoError("cannot read " + o.data);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const std::exception& e) {
        throw DataError(std::string("malformed data file: ") + e.what());
    }
    const ExperimentConfig c = resolve(o, "");
    const ProblemSetup s = build_setup(c, j.at("boundary_rows").get<int>() > 0);
    const SensorDesign d = design_from_json(j.at("design").dump());
    const ForwardBlocks b = blocks_for(s, d);
    const Vector y = json_vec(j.at("y"));
    if (y.size() != b.rows()) throw DimensionError("data length does not match the configured forward map");
    NoiseModel noise;
    noise.gamma_int = j.at("gamma_int").get<double>();
    noise.gamma_bdry = j.at("gamma_bdry").get<double>();
    const Vector est = posterior_mean(*s.prior, noise, b, y);
    Json r;
    r["schema"] = "ironloss.reconstruction/1";
    r["config_hash"] = c.hash();
    if (j.contains("x_true")) {
        const Vector x = json_vec(j.at("x_true"));
        if (x.size() != est.size()) throw DimensionError("x_true length does not match the mesh");
        r["err_rel"] = reconstruction_error(est, x, s.mass);
    }
    r["estimate"] = vec_json(est);
    std::filesystem::create_directories(o.out);
    const std::string path = join(o.out, "reconstruction.json");
    write_json(path, r);
    Json summary = {{"reconstruction", path}};
    if (r.contains("err_rel")) summary["err_rel"] = r["err_rel"];
    emit(summary);
    return 0;
}

// Design problem with the experiment's noise calibration on the initial design.
DesignProblem problem_for(const ExperimentConfig& c, const ProblemSetup& s, const SensorDesign& d,
                          std::shared_ptr<const ReducedBoundaryOp> red) {
    const Vector x = source_for(c, *s.mesh);
    const ForwardBlocks b = blocks_for(s, d);
    const NoiseModel noise = calibrate_noise(b, x, c.noise_percent);
    return make_design_problem(c, make_context(s, std::move(red), noise.gamma_int, noise.gamma_bdry), &d);
}

int cmd_optimize(const Options& o) {
    const ExperimentConfig c = resolve(o, "");
    const ProblemSetup s = build_setup(c, c.boundary_in_design);
    const SensorDesign d = resolve_design(o, c, s);
    const auto red = c.boundary_in_design ? reduced_boundary(c, s, c.rank) : nullptr;
    const DesignProblem p = problem_for(c, s, d, red);
    const OptTrajectory tr = sliding_sensors_optimize(p, d, c.sliding);
    std::filesystem::create_directories(o.out);
    Json j = trajectory_json(tr);
    j["config_hash"] = c.hash();
    j["mode"] = to_string(c.mode);
    write_json(join(o.out, "optimize.json"), j);
    write_csv(join(o.out, "optimize_trajectory.csv"), {"iteration", "phi", "phi_shifted", "step", "grad_norm"},
              trajectory_rows(tr));
    emit({{"optimize", join(o.out, "optimize.json")}, {"iterations", tr.phi.size() - 1},
          {"phi_initial", tr.phi.front()}, {"phi_final", tr.phi.back()}, {"termination", tr.termination}});
    return 0;
}

int cmd_sparsify(const Options& o) {
    const ExperimentConfig c = resolve(o, "");
    const ProblemSetup s = build_setup(c, c.boundary_in_design);
    const SensorDesign cands = candidate_grid(c, s.region, c.exp1.candidate_grid);
    const auto red = c.boundary_in_design ? reduced_boundary(c, s, c.rank) : nullptr;
    const SensorDesign seed_design = resolve_design(o, c, s);
    DesignProblem p = problem_for(c, s, seed_design, red);
    DesignObjectiveConfig plain = p.config();
    plain.overlap_weight = 0.0;
    p = p.with_config(plain);
    const SparsificationState st = sparsify_design(p, cands, c.sparsify);
    const SensorDesign sel = st.selected_design();
    Json j;
    j["config_hash"] = c.hash();
    j["candidates"] = cands.count();
    j["penalty_scale"] = c.sparsify.penalty_scale;
    j["binary"] = st.binary;
    j["gamma_schedule"] = st.gamma_schedule;
    j["q_schedule"] = st.q_schedule;
    j["weights"] = vec_json(st.weights);
    j["selected"] = design_json(sel);
    j["phi"] = phi_A(p, sel);
    std::filesystem::create_directories(o.out);
    write_json(join(o.out, "sparsify.json"), j);
    emit({{"sparsify", join(o.out, "sparsify.json")}, {"survivors", sel.count()}, {"binary", st.binary}});
    return 0;
}

int cmd_reduce(const Options& o) {
    ExperimentConfig c = resolve(o, "");
    if (c.cache_dir.empty()) c.cache_dir = o.out;
    const ProblemSetup s = build_setup(c, true);
    bool cached = false;
    const auto red = reduced_boundary(c, s, c.rank, &cached);
    if (!red) throw ConfigError("no boundary measurements configured");
    emit({{"cache_dir", c.cache_dir}, {"rank", red->rank()}, {"from_cache", cached},
          {"rank_deficient", red->rank_deficient}, {"sigma_max", red->rank() ? red->sigma(0) : 0.0},
          {"sigma_min", red->rank() ? red->sigma(red->rank() - 1) : 0.0}});
    return 0;
}

int cmd_experiment(const Options& o, const std::string& which) {
    ExperimentConfig c = resolve(o, which);
    if (o.sensors) {
        if (which == "exp1") c.exp1.target_survivors = *o.sensors;
        else c.exp2.sensor_counts = {*o.sensors};
    }
    const Report r = which == "exp1" ? run_experiment_one(c, o.out) : run_experiment_two(c, o.out);
    emit({{"report", join(o.out, which + "_report.json")}, {"config_hash", r.config_hash}, {"errors", r.errors.size()}});
    return 0;
}

void error_record(const std::string& kind, const std::string& message) {
    std::cerr << Json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Inverse heat-source reconstruction and A-optimal sensor placement"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON experiment config");
        sub->add_option("--seed", o.seed, "master seed (u64)");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--rank", o.rank, "reduced boundary rank");
        sub->add_option("--sensors", o.sensors, "internal sensor count");
        sub->add_option("--mode", o.mode, "seminorm")->check(CLI::IsMember({"M", "L"}));
    };
    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {{"mesh", "build and export the mesh"},
                        {"forward", "simulate noisy measurements"},
                        {"reconstruct", "posterior mean from a data file"},
                        {"optimize", "sliding-sensors optimization"},
                        {"sparsify", "candidate-grid sparsification"},
                        {"reduce", "build or load the reduced boundary operator"},
                        {"exp1", "unit-square experiment suite"},
                        {"exp2", "transformer experiment suite"}};
    std::vector<CLI::App*> apps;
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        common(sub);
        const std::string name = s.name;
        if (name == "forward" || name == "optimize" || name == "sparsify")
            sub->add_option("--design", o.design, "design JSON file");
        if (name == "reconstruct") sub->add_option("--data", o.data, "data JSON file written by forward");
        apps.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        error_record("usage", e.what());
        return 2;
    }

    try {
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "mesh") return cmd_mesh(o);
        if (cmd == "forward") return cmd_forward(o);
        if (cmd == "reconstruct") return cmd_reconstruct(o);
        if (cmd == "optimize") return cmd_optimize(o);
        if (cmd == "sparsify") return cmd_sparsify(o);
        if (cmd == "reduce") return cmd_reduce(o);
        return cmd_experiment(o, cmd);
    } catch (const Error& e) {
        error_record(e.kind(), e.what());
    } catch (const std::exception& e) {
        error_record("internal", e.what());
    }
    return 1;
}

}  // namespace ironloss
