#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ironloss/hash.hpp"
#include "ironloss/harness.hpp"

namespace ironloss {

ExperimentConfig default_config(const std::string& experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    if (experiment == "exp1") {
        c.domain = DomainSpec{};
        c.domain.kind = GeometryKind::UnitSquare;
        c.domain.extents = {0.0, 1.0, 0.0, 1.0};
        c.domain.mesh_size = 1.0 / 32.0;
        c.material = MaterialModel{};
        c.time = {0.6, 20, 10};
        c.alpha = 10.0;
        c.beta = 0.1;
        c.noise_percent = 0.5;
        c.sensor_radius = 0.05;
        c.boundary_pixels = 76;
        c.boundary_in_design = false;
    } else if (experiment == "exp2") {
        c.domain = default_transformer_spec();
        c.material = transformer_material();
        c.time = {2e4, 20, 10};
        c.alpha = 1e-8;
        c.beta = 1e-7;
        c.noise_percent = 0.1;
        c.sensor_radius = 5e-4;
        c.boundary_pixels = 60;
        c.boundary_in_design = true;
    } else {
        throw ConfigError("unknown experiment '" + experiment + "' (expected exp1 or exp2)");
    }
    return c;
}

void ExperimentConfig::validate() const {
    domain.validate();
    material.validate();
    time.validate();
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
    };
    positive(alpha, "prior alpha");
    positive(beta, "prior beta");
    positive(noise_percent, "noise percent");
    positive(sensor_radius, "sensor radius");
    if (stencil_points < 1) throw ConfigError("stencil_points must be >= 1");
    if (boundary_pixels < 0) throw ConfigError("boundary_pixels must be >= 0");
    if (rank < 0 || power_iters < 0 || oversample < 0) throw ConfigError("reduction parameters must be >= 0");
    if (overlap_factor < 0.0) throw ConfigError("overlap_factor must be >= 0");
    if (exp1.sources < 0 || exp1.configs < 0) throw ConfigError("exp1 counts must be >= 0");
    if (exp1.grid_per_axis < 1 || exp1.candidate_grid < 1 || exp1.target_survivors < 1) {
        throw ConfigError("exp1 grid sizes must be >= 1");
    }
    for (int m : exp2.sensor_counts)
        if (m < 0) throw ConfigError("exp2 sensor counts must be >= 0");
    for (int m : exp2.sweep)
        if (m < 0) throw ConfigError("exp2 sweep counts must be >= 0");
    for (int r : exp2.rank_sweep)
        if (r < 1) throw ConfigError("exp2 rank sweep entries must be >= 1");
}

namespace {

Json rect_json(const Rect& r) { return Json::array({r.x0, r.x1, r.y0, r.y1}); }

Rect rect_from(const Json& j) {
    if (!j.is_array() || j.size() != 4) throw ConfigError("rectangles are [x0, x1, y0, y1]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

Json tensor_json(const Eigen::Matrix2d& k) {
    if (k(0, 1) == 0.0 && k(1, 0) == 0.0 && k(0, 0) == k(1, 1)) return k(0, 0);
    return Json::array({Json::array({k(0, 0), k(0, 1)}), Json::array({k(1, 0), k(1, 1)})});
}

Eigen::Matrix2d tensor_from(const Json& j) {
    if (j.is_number()) return j.get<double>() * Eigen::Matrix2d::Identity();
    if (!j.is_array() || j.size() != 2 || j[0].size() != 2 || j[1].size() != 2) {
        throw ConfigError("conductivity must be a number or a 2x2 array");
    }
    Eigen::Matrix2d k;
    k << j[0][0].get<double>(), j[0][1].get<double>(), j[1][0].get<double>(), j[1][1].get<double>();
    return k;
}

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

template <class T>
void read(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T, class F>
void read_per_subdomain(const Json& j, const char* key, PerSubdomain<T>& out, F conv) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    if (v.is_object()) {
        check_keys(v, {"whole", "core", "coil"}, key);
        if (v.contains("whole")) out.whole = conv(v.at("whole"));
        if (v.contains("core")) out.core = conv(v.at("core"));
        if (v.contains("coil")) out.coil = conv(v.at("coil"));
    } else {
        out = PerSubdomain<T>::uniform(conv(v));
    }
}

}  // namespace

Json ExperimentConfig::to_json() const {
    Json j;
    j["experiment"] = experiment;
    j["seed"] = seed;
    Json d;
    d["kind"] = domain.kind == GeometryKind::UnitSquare ? "unit_square" : "transformer_half";
    d["extents"] = rect_json(domain.extents);
    d["mesh_size"] = domain.mesh_size;
    d["coils"] = Json::array();
    for (const auto& c : domain.coils) d["coils"].push_back(rect_json(c));
    d["refinement_band"] = domain.refinement_band;
    j["domain"] = d;
    Json m;
    m["rho"] = {{"whole", material.rho.whole}, {"core", material.rho.core}, {"coil", material.rho.coil}};
    m["kappa"] = {{"whole", tensor_json(material.kappa.whole)},
                  {"core", tensor_json(material.kappa.core)},
                  {"coil", tensor_json(material.kappa.coil)}};
    m["h"] = material.h;
    m["kappa_ins"] = material.kappa_ins;
    m["d_ins"] = material.d_ins;
    j["material"] = m;
    j["time"] = {{"final_time", time.final_time}, {"observations", time.observations}, {"substeps", time.substeps}};
    j["prior"] = {{"alpha", alpha}, {"beta", beta}};
    j["noise_percent"] = noise_percent;
    j["sensors"] = {{"radius", sensor_radius},
                    {"stencil_points", stencil_points},
                    {"boundary_pixels", boundary_pixels},
                    {"boundary_in_design", boundary_in_design}};
    j["reduction"] = {{"rank", rank}, {"power_iters", power_iters}, {"oversample", oversample}, {"cache_dir", cache_dir}};
    j["optimizer"] = {{"mode", to_string(mode)},
                      {"overlap_factor", overlap_factor},
                      {"max_iterations", sliding.max_iterations},
                      {"armijo", sliding.armijo},
                      {"backtrack", sliding.backtrack},
                      {"max_halvings", sliding.max_halvings},
                      {"grad_tol", sliding.grad_tol},
                      {"step_tol", sliding.step_tol},
                      {"initial_displacement", sliding.initial_displacement}};
    j["sparsify"] = {{"penalty_scale", sparsify.penalty_scale},
                     {"initial_weight", sparsify.initial_weight},
                     {"epsilon", sparsify.epsilon},
                     {"q_start", sparsify.q_start},
                     {"q_factor", sparsify.q_factor},
                     {"q_min", sparsify.q_min},
                     {"gamma_growth", sparsify.gamma_growth},
                     {"max_stages", sparsify.max_stages},
                     {"inner_iterations", sparsify.inner_iterations},
                     {"inner_tol", sparsify.inner_tol},
                     {"binary_tol", sparsify.binary_tol},
                     {"span_tol", sparsify.span_tol}};
    j["exp1"] = {{"sources", exp1.sources},
                 {"configs", exp1.configs},
                 {"perturbation", exp1.perturbation},
                 {"grid_per_axis", exp1.grid_per_axis},
                 {"candidate_grid", exp1.candidate_grid},
                 {"target_survivors", exp1.target_survivors},
                 {"bisection_steps", exp1.bisection_steps},
                 {"steady_factor", exp1.steady_factor},
                 {"bump_seed", exp1.bump_seed},
                 {"stages", exp1.stages}};
    j["exp2"] = {{"sensor_counts", exp2.sensor_counts},
                 {"sweep", exp2.sweep},
                 {"optimize_counts", exp2.optimize_counts},
                 {"rank_sweep", exp2.rank_sweep},
                 {"rank_sweep_sensors", exp2.rank_sweep_sensors},
                 {"noise_repeats", exp2.noise_repeats},
                 {"rank_diagnostic", exp2.rank_diagnostic}};
    return j;
}

std::string ExperimentConfig::hash() const {
    Fnv1a h;
    h.text(to_json().dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h.digest()));
    return buf;
}

ExperimentConfig config_from_json(const Json& j, const std::string& experiment) {
    try {
        check_keys(j, {"experiment", "seed", "domain", "material", "time", "prior", "noise_percent", "sensors",
                       "reduction", "optimizer", "sparsify", "exp1", "exp2"},
                   "config");
        std::string exp = experiment;
        if (j.contains("experiment")) {
            const auto named = j.at("experiment").get<std::string>();
            if (!exp.empty() && named != exp) {
                throw ConfigError("config is for '" + named + "' but '" + exp + "' was requested");
            }
            exp = named;
        }
        if (exp.empty()) throw ConfigError("config does not name an experiment");
        ExperimentConfig c = default_config(exp);
        read(j, "seed", c.seed);
        read(j, "noise_percent", c.noise_percent);

        if (j.contains("domain")) {
            const Json& d = j.at("domain");
            check_keys(d, {"kind", "extents", "mesh_size", "refinement", "coils", "refinement_band"}, "domain");
            if (d.contains("kind")) {
                const auto k = d.at("kind").get<std::string>();
                if (k == "unit_square") {
                    c.domain.kind = GeometryKind::UnitSquare;
                } else if (k == "transformer_half") {
                    c.domain.kind = GeometryKind::TransformerHalf;
                } else {
                    throw ConfigError("domain kind must be unit_square or transformer_half");
                }
            }
            if (d.contains("extents")) c.domain.extents = rect_from(d.at("extents"));
            read(d, "mesh_size", c.domain.mesh_size);
            if (d.contains("refinement")) c.domain.mesh_size = 1.0 / d.at("refinement").get<int>();
            if (d.contains("coils")) {
                c.domain.coils.clear();
                for (const auto& r : d.at("coils")) c.domain.coils.push_back(rect_from(r));
            }
            read(d, "refinement_band", c.domain.refinement_band);
        }
        if (j.contains("material")) {
            const Json& m = j.at("material");
            check_keys(m, {"rho", "kappa", "h", "kappa_ins", "d_ins"}, "material");
            read_per_subdomain(m, "rho", c.material.rho, [](const Json& v) { return v.get<double>(); });
            read_per_subdomain(m, "kappa", c.material.kappa, tensor_from);
            read(m, "h", c.material.h);
            read(m, "kappa_ins", c.material.kappa_ins);
            read(m, "d_ins", c.material.d_ins);
        }
        if (j.contains("time")) {
            const Json& t = j.at("time");
            check_keys(t, {"final_time", "observations", "substeps"}, "time");
            read(t, "final_time", c.time.final_time);
            read(t, "observations", c.time.observations);
            read(t, "substeps", c.time.substeps);
        }
        if (j.contains("prior")) {
            const Json& p = j.at("prior");
            check_keys(p, {"alpha", "beta"}, "prior");
            read(p, "alpha", c.alpha);
            read(p, "beta", c.beta);
        }
        if (j.contains("sensors")) {
            const Json& s = j.at("sensors");
            check_keys(s, {"radius", "stencil_points", "boundary_pixels", "boundary_in_design"}, "sensors");
            read(s, "radius", c.sensor_radius);
            read(s, "stencil_points", c.stencil_points);
            read(s, "boundary_pixels", c.boundary_pixels);
            read(s, "boundary_in_design", c.boundary_in_design);
        }
        if (j.contains("reduction")) {
            const Json& r = j.at("reduction");
            check_keys(r, {"rank", "power_iters", "oversample", "cache_dir"}, "reduction");
            read(r, "rank", c.rank);
            read(r, "power_iters", c.power_iters);
            read(r, "oversample", c.oversample);
            read(r, "cache_dir", c.cache_dir);
        }
        if (j.contains("optimizer")) {
            const Json& o = j.at("optimizer");
            check_keys(o, {"mode", "overlap_factor", "max_iterations", "armijo", "backtrack", "max_halvings", "grad_tol",
                           "step_tol", "initial_displacement"},
                       "optimizer");
            if (o.contains("mode")) c.mode = parse_seminorm(o.at("mode").get<std::string>());
            read(o, "overlap_factor", c.overlap_factor);
            read(o, "max_iterations", c.sliding.max_iterations);
            read(o, "armijo", c.sliding.armijo);
            read(o, "backtrack", c.sliding.backtrack);
            read(o, "max_halvings", c.sliding.max_halvings);
            read(o, "grad_tol", c.sliding.grad_tol);
            read(o, "step_tol", c.sliding.step_tol);
            read(o, "initial_displacement", c.sliding.initial_displacement);
        }
        if (j.contains("sparsify")) {
            const Json& s = j.at("sparsify");
            check_keys(s, {"penalty_scale", "initial_weight", "epsilon", "q_start", "q_factor", "q_min", "gamma_growth",
                           "max_stages", "inner_iterations", "inner_tol", "binary_tol", "span_tol"},
                       "sparsify");
            read(s, "penalty_scale", c.sparsify.penalty_scale);
            read(s, "initial_weight", c.sparsify.initial_weight);
            read(s, "epsilon", c.sparsify.epsilon);
            read(s, "q_start", c.sparsify.q_start);
            read(s, "q_factor", c.sparsify.q_factor);
            read(s, "q_min", c.sparsify.q_min);
            read(s, "gamma_growth", c.sparsify.gamma_growth);
            read(s, "max_stages", c.sparsify.max_stages);
            read(s, "inner_iterations", c.sparsify.inner_iterations);
            read(s, "inner_tol", c.sparsify.inner_tol);
            read(s, "binary_tol", c.sparsify.binary_tol);
            read(s, "span_tol", c.sparsify.span_tol);
        }
        if (j.contains("exp1")) {
            const Json& e = j.at("exp1");
            check_keys(e, {"sources", "configs", "perturbation", "grid_per_axis", "candidate_grid", "target_survivors",
                           "bisection_steps", "steady_factor", "bump_seed", "stages"},
                       "exp1");
            read(e, "sources", c.exp1.sources);
            read(e, "configs", c.exp1.configs);
            read(e, "perturbation", c.exp1.perturbation);
            read(e, "grid_per_axis", c.exp1.grid_per_axis);
            read(e, "candidate_grid", c.exp1.candidate_grid);
            read(e, "target_survivors", c.exp1.target_survivors);
            read(e, "bisection_steps", c.exp1.bisection_steps);
            read(e, "steady_factor", c.exp1.steady_factor);
            read(e, "bump_seed", c.exp1.bump_seed);
            read(e, "stages", c.exp1.stages);
            for (const auto& s : c.exp1.stages) {
                if (s != "a" && s != "b" && s != "c" && s != "d") throw ConfigError("exp1 stages are a, b, c, d");
            }
        }
        if (j.contains("exp2")) {
            const Json& e = j.at("exp2");
            check_keys(e, {"sensor_counts", "sweep", "optimize_counts", "rank_sweep", "rank_sweep_sensors", "noise_repeats",
                           "rank_diagnostic"},
                       "exp2");
            read(e, "sensor_counts", c.exp2.sensor_counts);
            read(e, "sweep", c.exp2.sweep);
            read(e, "optimize_counts", c.exp2.optimize_counts);
            read(e, "rank_sweep", c.exp2.rank_sweep);
            read(e, "rank_sweep_sensors", c.exp2.rank_sweep_sensors);
            read(e, "noise_repeats", c.exp2.noise_repeats);
            read(e, "rank_diagnostic", c.exp2.rank_diagnostic);
        }
        c.validate();
        return c;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    } catch (const GeometryError& e) {
        throw ConfigError(e.what());
    } catch (const AssemblyError& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig load_config(const std::string& path, const std::string& experiment) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j, experiment);
}

}  // namespace ironloss
