#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ironloss/reduction.hpp"
#include "ironloss/sensing.hpp"

namespace ironloss {

/// A^T A = M (mass matrix, L2 error) or A^T A = Gamma_pr^{-1}.
enum class SeminormMode { M, L };

const char* to_string(SeminormMode m);
SeminormMode parse_seminorm(const std::string& s);

struct DesignObjectiveConfig {
    SeminormMode mode = SeminormMode::M;
    double overlap_weight = 0.0;
    /// Omit the design-independent constant tr(Gamma_pr A^T A).
    bool drop_constant = false;
    AdmissibleRegion region;
    /// Returned (with feasible = false) for designs outside the region.
    double infeasible_value = 1e300;
};

/// Design-independent ingredients of the target functional.
struct DesignContext {
    std::shared_ptr<const Mesh> mesh;
    SparseMatrix mass;
    std::shared_ptr<const MidpointPropagator> propagator;
    std::shared_ptr<const PriorModel> prior;
    /// Boundary data in reduced form; null when there are no boundary sensors.
    std::shared_ptr<const ReducedBoundaryOp> reduced;
    double gamma_int = 1.0;
    double gamma_bdry = 1.0;
};

struct PhiEvaluation {
    double value = 0.0;
    Vector gradient;
    bool feasible = true;
    double penalty = 0.0;
};

/// Evaluates Phi_A(p) = tr(A Gamma_post(p) A^T) in the low-rank form and its
/// gradient with respect to the flattened sensor coordinates.
class DesignProblem {
public:
    DesignProblem(DesignContext ctx, DesignObjectiveConfig cfg);

    const DesignContext& context() const { return ctx_; }
    const DesignObjectiveConfig& config() const { return cfg_; }
    /// tr(Gamma_pr A^T A): tr(Gamma_pr M) in mode M, n in mode L.
    double constant() const { return constant_; }

    bool feasible(const SensorDesign& d) const;
    Matrix internal_forward(const SensorDesign& d) const;
    PhiEvaluation evaluate(const SensorDesign& d, bool with_gradient) const;

    /// Same problem with a different configuration (shares all heavy data).
    DesignProblem with_config(DesignObjectiveConfig cfg) const;

private:
    DesignProblem(DesignContext ctx, DesignObjectiveConfig cfg, double constant);

    DesignContext ctx_;
    DesignObjectiveConfig cfg_;
    double constant_ = 0.0;
};

double phi_A(const DesignProblem& problem, const SensorDesign& d);
Vector grad_phi_A(const DesignProblem& problem, const SensorDesign& d);

struct SlidingConfig {
    int max_iterations = 200;
    double armijo = 1e-4;
    double backtrack = 0.5;
    int max_halvings = 30;
    /// Stop when the projected-gradient max-norm < grad_tol * |Phi(p0)| / diam.
    double grad_tol = 1e-6;
    /// Stop when an accepted step moves no sensor more than step_tol * diam.
    double step_tol = 1e-9;
    /// First trial step moves the fastest sensor by this fraction of diam.
    double initial_displacement = 0.1;
};

struct OptTrajectory {
    std::vector<SensorDesign> iterates;
    std::vector<double> phi;        ///< absolute values at the iterates
    std::vector<double> steps;      ///< accepted step lengths (0 for the start)
    std::vector<double> grad_norms; ///< projected-gradient max-norms
    std::string termination;

    std::vector<double> shifted() const;
    const SensorDesign& final_design() const { return iterates.back(); }
};

/// Projected steepest descent with Armijo backtracking.
OptTrajectory sliding_sensors_optimize(const DesignProblem& problem, const SensorDesign& p0,
                                       const SlidingConfig& cfg = {});

struct SparsifyConfig {
    /// gamma_0 = penalty_scale * mean |dPhi/dw| at the initial weights.
    double penalty_scale = 1.0;
    double initial_weight = 0.5;
    double epsilon = 1e-3;        ///< shift in the (w + eps)^q surrogate
    double q_start = 1.0;
    double q_factor = 0.5;
    double q_min = 0.05;
    double gamma_growth = 2.0;
    int max_stages = 25;
    int inner_iterations = 150;
    double inner_tol = 1e-6;
    double binary_tol = 0.05;
    /// Data directions whose whitened energy is below this are dropped.
    double span_tol = 1e-8;
};

struct SparsificationState {
    SensorDesign candidates;
    Vector weights;
    std::vector<double> gamma_schedule;
    std::vector<double> q_schedule;
    std::vector<int> selected;
    bool binary = false;
    int evaluations = 0;

    SensorDesign selected_design() const;
};

/// Weighted-candidate target: rows of candidate i scaled by w_i. Evaluates
/// Phi (the configured seminorm, constant included) and dPhi/dw.
class WeightedDesignObjective {
public:
    WeightedDesignObjective(const DesignProblem& problem, const SensorDesign& candidates, double span_tol = 1e-8);

    int count() const { return static_cast<int>(offset_.size()) - 1; }
    double evaluate(const Vector& w, Vector* gradient) const;

private:
    // Everything lives in an orthonormal basis P of the span of all
    // whitened data directions; the complement keeps the prior.
    double outside_ = 0.0;      // tr(T) - tr(P^T T P)
    Matrix base_;               // P^T (I + boundary information) P
    Matrix target_;             // P^T T P with T = L^{-T} A^T A L^{-1}
    Matrix z_;                  // P^T (compressed whitened candidate rows), side by side
    std::vector<int> offset_;   // candidate i owns columns [offset_[i], offset_[i+1])
};

SparsificationState sparsify_design(const DesignProblem& problem, const SensorDesign& candidates,
                                    const SparsifyConfig& cfg = {});
/// Reuses a prebuilt objective (candidates must match it).
SparsificationState sparsify_design(const WeightedDesignObjective& obj, const SensorDesign& candidates,
                                    const SparsifyConfig& cfg = {});

}  // namespace ironloss
