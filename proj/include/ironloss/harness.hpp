#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ironloss/oed.hpp"

namespace ironloss {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------- config

struct ExperimentOneSettings {
    int sources = 50;
    int configs = 100;
    double perturbation = 0.2;
    int grid_per_axis = 4;
    int candidate_grid = 20;
    int target_survivors = 16;
    int bisection_steps = 10;
    double steady_factor = 5.0;   ///< steady snapshot at this many thermal time constants
    std::uint64_t bump_seed = 7;  ///< seed of the single-mode source of the steady/transient comparison
    std::vector<std::string> stages{"a", "b", "c", "d"};
};

struct ExperimentTwoSettings {
    std::vector<int> sensor_counts{18, 26};
    std::vector<int> sweep{6, 10, 14, 18, 26, 34};
    std::vector<int> rank_sweep{10, 20, 40, 80, 120};
    /// Counts that get a sliding optimization; empty means all of them.
    std::vector<int> optimize_counts;
    int rank_sweep_sensors = 18;
    int noise_repeats = 10;
    bool rank_diagnostic = true;
};

struct ExperimentConfig {
    std::string experiment = "exp1";
    std::uint64_t seed = 1;

    DomainSpec domain;
    MaterialModel material;
    TimeGrid time;
    double alpha = 10.0;
    double beta = 0.1;
    double noise_percent = 0.5;

    double sensor_radius = 0.05;
    int stencil_points = 7;
    int boundary_pixels = 76;
    bool boundary_in_design = false;  ///< boundary data present during sensor optimization

    int rank = 120;
    int power_iters = 2;
    int oversample = 10;
    std::string cache_dir;

    SeminormMode mode = SeminormMode::M;
    double overlap_factor = 1e-2;
    SlidingConfig sliding;
    SparsifyConfig sparsify;

    ExperimentOneSettings exp1;
    ExperimentTwoSettings exp2;

    void validate() const;
    Json to_json() const;
    /// Hex FNV-1a digest of the canonical JSON form.
    std::string hash() const;
};

ExperimentConfig default_config(const std::string& experiment);
/// Defaults of `experiment` (or of the "experiment" key) overridden by `j`.
ExperimentConfig config_from_json(const Json& j, const std::string& experiment = "");
ExperimentConfig load_config(const std::string& path, const std::string& experiment = "");

// ---------------------------------------------------------------- sources

/// exp(-a (x - cx)^2 - b (y - cy)^2)
struct GaussianMode {
    double a = 0.0, b = 0.0, cx = 0.5, cy = 0.5;
};

/// M ~ U{1..11} modes (or `forced_modes` when > 0), a, b ~ U[0,100], centres ~ U(0,1)^2.
std::vector<GaussianMode> draw_gaussian_modes(std::mt19937_64& rng, int forced_modes = 0);
Vector evaluate_modes(const Mesh& mesh, const std::vector<GaussianMode>& modes);
Vector generate_random_source(const Mesh& mesh, std::uint64_t seed, int forced_modes = 0);

/// 2.557e5 in the coil, 1e5 exp(-150 dist(x, coil)) in the core.
Vector true_source_transformer(const Mesh& mesh, const std::vector<Rect>& coils);

/// Deterministic child seed (splitmix64 over the parent and the tags).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

// ---------------------------------------------------------------- problem

struct ProblemSetup {
    std::shared_ptr<const Mesh> mesh;
    SparseMatrix mass;
    SparseMatrix mass_rho;
    SparseMatrix stiffness;
    TimeGrid grid;
    std::shared_ptr<const MidpointPropagator> propagator;
    std::shared_ptr<const PriorModel> prior;
    MeasurementRows boundary;
    Matrix f_bdry;  ///< empty when the setup has no boundary sensors
    AdmissibleRegion region;
};

ProblemSetup build_setup(const ExperimentConfig& cfg, bool with_boundary);

/// Cache key of the reduced boundary operator for this setup.
std::uint64_t reduction_key(const ExperimentConfig& cfg, const ProblemSetup& setup, int rank);
/// Builds (or loads from cfg.cache_dir) the reduced boundary operator.
std::shared_ptr<const ReducedBoundaryOp> reduced_boundary(const ExperimentConfig& cfg, const ProblemSetup& setup,
                                                          int rank, bool* from_cache = nullptr);

DesignContext make_context(const ProblemSetup& setup, std::shared_ptr<const ReducedBoundaryOp> reduced,
                           double gamma_int, double gamma_bdry);

/// Objective config from the experiment config; the overlap weight is
/// overlap_factor * |Phi(p0)| / (2 r)^2 when p0 is given.
DesignProblem make_design_problem(const ExperimentConfig& cfg, DesignContext ctx, const SensorDesign* p0 = nullptr);

SensorDesign make_design(const ExperimentConfig& cfg, std::vector<Point> positions);
/// {1/(k+1), ..., k/(k+1)}^2 on the unit square.
SensorDesign unit_square_grid(const ExperimentConfig& cfg, int per_axis);
/// Cell centres of an nx x ny lattice over the domain that fall in the
/// admissible region; searches for a lattice with exactly `count` points.
SensorDesign lattice_design(const ExperimentConfig& cfg, const AdmissibleRegion& region, int count);
/// per_axis^2 candidates spanning the admissible box.
SensorDesign candidate_grid(const ExperimentConfig& cfg, const AdmissibleRegion& region, int per_axis);

// ---------------------------------------------------------------- report

struct Report {
    std::string experiment;
    std::string config_hash;
    std::uint64_t seed = 0;
    Json config;
    Json payload = Json::object();
    Json timings = Json::object();
    Json errors = Json::array();

    Json to_json() const;
};

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void write_json(const std::string& path, const Json& j);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
Json design_json(const SensorDesign& d);
Json trajectory_json(const OptTrajectory& t);
std::vector<std::vector<double>> trajectory_rows(const OptTrajectory& t);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------- experiments

/// Unit-square suite: (a) steady vs transient boundary-only reconstruction,
/// (b) sliding sensors from the 4x4 grid, (c) sparsification plus sliding
/// refinement, (d) Phi_A versus mean error over random designs.
Report run_experiment_one(const ExperimentConfig& cfg, const std::string& out_dir = "");
/// Transformer suite: grid versus optimized designs and the rank sweep.
Report run_experiment_two(const ExperimentConfig& cfg, const std::string& out_dir = "");

int cli_main(int argc, char** argv);

}  // namespace ironloss
