#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ironloss/hash.hpp"
#include "ironloss/harness.hpp"

namespace ironloss {

ProblemSetup build_setup(const ExperimentConfig& cfg, bool with_boundary) {
    cfg.validate();
    ProblemSetup s;
    s.mesh = std::make_shared<const Mesh>(build_mesh(cfg.domain));
    const Mesh& mesh = *s.mesh;
    s.mass = assemble_mass(mesh, ScalarField::uniform(1.0));
    s.mass_rho = assemble_mass(mesh, cfg.material.rho);
    s.stiffness = assemble_stiffness(mesh, cfg.material);
    s.grid = cfg.time;
    s.propagator = std::make_shared<const MidpointPropagator>(s.mass_rho, s.stiffness, s.grid);
    s.prior = std::make_shared<const PriorModel>(PriorModel::from_parameters(mesh, cfg.beta, cfg.alpha));
    if (with_boundary && cfg.boundary_pixels > 0) {
        s.boundary = build_boundary_pixel_rows(mesh, cfg.boundary_pixels);
        s.f_bdry = assemble_forward_rows(s.mass, *s.propagator, s.boundary.rows);
    }
    s.region = AdmissibleRegion::for_disks(cfg.domain.extents, cfg.domain.coils, cfg.sensor_radius);
    return s;
}

std::uint64_t reduction_key(const ExperimentConfig& cfg, const ProblemSetup& setup, int rank) {
    Fnv1a h;
    h.text("reduced-boundary");
    for (const auto& p : setup.mesh->nodes()) h.value(p.x()).value(p.y());
    for (const auto& t : setup.mesh->triangles()) h.value(t);
    h.text(cfg.to_json()["material"].dump());
    h.value(cfg.time.final_time).value(cfg.time.observations).value(cfg.time.substeps);
    h.value(cfg.alpha).value(cfg.beta).value(cfg.boundary_pixels);
    h.value(rank).value(cfg.power_iters).value(cfg.oversample).value(cfg.seed);
    return h.digest();
}

std::shared_ptr<const ReducedBoundaryOp> reduced_boundary(const ExperimentConfig& cfg, const ProblemSetup& setup,
                                                          int rank, bool* from_cache) {
    if (from_cache) *from_cache = false;
    if (setup.f_bdry.rows() == 0) return nullptr;
    const std::uint64_t key = reduction_key(cfg, setup, rank);
    std::string path;
    if (!cfg.cache_dir.empty()) {
        std::filesystem::create_directories(cfg.cache_dir);
        char name[64];
        std::snprintf(name, sizeof name, "reduced_%016llx.bin", static_cast<unsigned long long>(key));
        path = (std::filesystem::path(cfg.cache_dir) / name).string();
        if (auto op = read_reduced_op(path, key)) {
            if (from_cache) *from_cache = true;
            return std::make_shared<const ReducedBoundaryOp>(std::move(*op));
        }
    }
    const LinearOperator fpr = prior_condition(setup.f_bdry, setup.prior->factor);
    auto op = std::make_shared<const ReducedBoundaryOp>(
        reduce_boundary_operator(fpr, rank, cfg.power_iters, derive_seed(cfg.seed, 0x5244), cfg.oversample));
    if (!path.empty()) write_reduced_op(path, *op, key);
    return op;
}

DesignContext make_context(const ProblemSetup& setup, std::shared_ptr<const ReducedBoundaryOp> reduced,
                           double gamma_int, double gamma_bdry) {
    DesignContext c;
    c.mesh = setup.mesh;
    c.mass = setup.mass;
    c.propagator = setup.propagator;
    c.prior = setup.prior;
    c.reduced = std::move(reduced);
    c.gamma_int = gamma_int;
    c.gamma_bdry = gamma_bdry;
    return c;
}

DesignProblem make_design_problem(const ExperimentConfig& cfg, DesignContext ctx, const SensorDesign* p0) {
    DesignObjectiveConfig oc;
    oc.mode = cfg.mode;
    oc.drop_constant = true;
    oc.region = AdmissibleRegion::for_disks(cfg.domain.extents, cfg.domain.coils, cfg.sensor_radius);
    DesignProblem base(std::move(ctx), oc);
    if (!p0 || cfg.overlap_factor <= 0.0) return base;
    const double phi0 = std::abs(phi_A(base, *p0));
    oc.overlap_weight = cfg.overlap_factor * phi0 / std::pow(2.0 * cfg.sensor_radius, 2);
    return base.with_config(oc);
}

SensorDesign make_design(const ExperimentConfig& cfg, std::vector<Point> positions) {
    SensorDesign d;
    d.positions = std::move(positions);
    d.radius = cfg.sensor_radius;
    d.stencil_points = cfg.stencil_points;
    return d;
}

SensorDesign unit_square_grid(const ExperimentConfig& cfg, int per_axis) {
    std::vector<Point> pts;
    const Rect& e = cfg.domain.extents;
    for (int j = 1; j <= per_axis; ++j)
        for (int i = 1; i <= per_axis; ++i)
            pts.emplace_back(e.x0 + e.width() * i / (per_axis + 1), e.y0 + e.height() * j / (per_axis + 1));
    return make_design(cfg, std::move(pts));
}

SensorDesign lattice_design(const ExperimentConfig& cfg, const AdmissibleRegion& region, int count) {
    const Rect& e = cfg.domain.extents;
    double best_score = std::numeric_limits<double>::infinity();
    std::vector<Point> best;
    for (int nx = 1; nx <= 40; ++nx) {
        for (int ny = 1; ny <= 80; ++ny) {
            const double hx = e.width() / nx, hy = e.height() / ny;
            std::vector<Point> pts;
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i) {
                    const Point p(e.x0 + (i + 0.5) * hx, e.y0 + (j + 0.5) * hy);
                    if (region.contains(p)) pts.push_back(p);
                }
            if (static_cast<int>(pts.size()) != count) continue;
            const double score = std::abs(std::log(hx / hy)) + 1e-6 * nx * ny;
            if (score < best_score) {
                best_score = score;
                best = std::move(pts);
            }
        }
    }
    if (count > 0 && best.empty()) {
        throw ConfigError("no regular lattice yields exactly " + std::to_string(count) + " admissible sensors");
    }
    return make_design(cfg, std::move(best));
}

SensorDesign candidate_grid(const ExperimentConfig& cfg, const AdmissibleRegion& region, int per_axis) {
    std::vector<Point> pts;
    const Rect& b = region.outer;
    for (int j = 0; j < per_axis; ++j)
        for (int i = 0; i < per_axis; ++i) {
            const double tx = per_axis == 1 ? 0.5 : static_cast<double>(i) / (per_axis - 1);
            const double ty = per_axis == 1 ? 0.5 : static_cast<double>(j) / (per_axis - 1);
            const Point p(b.x0 + tx * b.width(), b.y0 + ty * b.height());
            if (region.contains(p)) pts.push_back(p);
        }
    return make_design(cfg, std::move(pts));
}

}  // namespace ironloss
