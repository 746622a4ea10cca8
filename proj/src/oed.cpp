#include "ironloss/oed.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace ironloss {

const char* to_string(SeminormMode m) { return m == SeminormMode::M ? "M" : "L"; }

SeminormMode parse_seminorm(const std::string& s) {
    if (s == "M" || s == "m") return SeminormMode::M;
    if (s == "L" || s == "l") return SeminormMode::L;
    throw ConfigError("seminorm mode must be M or L, got '" + s + "'");
}

DesignProblem::DesignProblem(DesignContext ctx, DesignObjectiveConfig cfg)
    : ctx_(std::move(ctx)), cfg_(std::move(cfg)) {
    if (!ctx_.mesh || !ctx_.propagator || !ctx_.prior) throw ConfigError("design problem: incomplete context");
    if (cfg_.region.outer.area() <= 0.0 && cfg_.region.excluded.empty()) cfg_.region.outer = ctx_.mesh->bounding_box();
    constant_ = cfg_.mode == SeminormMode::M ? prior_trace(*ctx_.prior, ctx_.mass)
                                             : static_cast<double>(ctx_.prior->size());
}

DesignProblem::DesignProblem(DesignContext ctx, DesignObjectiveConfig cfg, double constant)
    : ctx_(std::move(ctx)), cfg_(std::move(cfg)), constant_(constant) {}

DesignProblem DesignProblem::with_config(DesignObjectiveConfig cfg) const {
    if (cfg.mode != cfg_.mode) return DesignProblem(ctx_, std::move(cfg));
    if (cfg.region.outer.area() <= 0.0 && cfg.region.excluded.empty()) cfg.region.outer = ctx_.mesh->bounding_box();
    return DesignProblem(ctx_, std::move(cfg), constant_);
}

bool DesignProblem::feasible(const SensorDesign& d) const {
    for (const auto& p : d.positions) {
        if (!cfg_.region.contains(p)) return false;
    }
    try {
        build_internal_sensor_rows(*ctx_.mesh, d);
    } catch (const DesignInfeasibleError&) {
        return false;
    }
    return true;
}

Matrix DesignProblem::internal_forward(const SensorDesign& d) const {
    return assemble_forward_rows(ctx_.mass, *ctx_.propagator, build_internal_sensor_rows(*ctx_.mesh, d).rows);
}

namespace {

SparseMatrix stack_rows(const std::vector<const SparseMatrix*>& parts, int n) {
    std::vector<Eigen::Triplet<double>> trips;
    int offset = 0;
    for (const auto* p : parts) {
        for (int k = 0; k < p->outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(*p, k); it; ++it) trips.emplace_back(offset + it.row(), it.col(), it.value());
        offset += static_cast<int>(p->rows());
    }
    SparseMatrix s(offset, n);
    s.setFromTriplets(trips.begin(), trips.end());
    return s;
}

}  // namespace

PhiEvaluation DesignProblem::evaluate(const SensorDesign& d, bool with_gradient) const {
    PhiEvaluation out;
    const int m = d.count();
    out.gradient = Vector::Zero(2 * m);
    if (!feasible(d)) {
        out.feasible = false;
        out.value = cfg_.infeasible_value;
        return out;
    }
    const Mesh& mesh = *ctx_.mesh;
    const PriorModel& prior = *ctx_.prior;
    const int n = prior.size();
    const int mt = ctx_.propagator->grid().observations;

    // One propagation for the sensor rows and, if needed, both derivative rows.
    const SparseMatrix b = build_internal_sensor_rows(mesh, d).rows;
    SparseMatrix dx, dy;
    int ms = m;
    SparseMatrix all = b;
    if (with_gradient && m > 0) {
        dx = internal_derivative_rows(mesh, d, 0);
        dy = internal_derivative_rows(mesh, d, 1);
        all = stack_rows({&b, &dx, &dy}, n);
        ms = 3 * m;
    }
    const Matrix f_all = assemble_forward_rows(ctx_.mass, *ctx_.propagator, all);
    Matrix f_int(static_cast<Eigen::Index>(m) * mt, n);
    for (int j = 0; j < mt; ++j) {
        f_int.middleRows(static_cast<Eigen::Index>(j) * m, m) = f_all.middleRows(static_cast<Eigen::Index>(j) * ms, m);
    }

    // Whitened data matrix Bh = N^{-1/2} Ftilde = U S V^T. The posterior
    // covariance in whitened coordinates is I - V D V^T with D = S^2/(1+S^2),
    // so Phi - const = -sum_i D_i v_i^T T v_i (T = L^{-T} A^T A L^{-1}); every
    // term is nonnegative, which keeps the value accurate at small noise.
    const ReducedForward fwd = assemble_reduced_forward(prior, f_int, ctx_.reduced.get(), ctx_.gamma_int, ctx_.gamma_bdry);
    const int k = fwd.rows();
    const int mi = fwd.internal_rows;
    const double base = cfg_.drop_constant ? 0.0 : constant_;
    out.value = base;
    if (k > 0) {
        const Matrix bh = fwd.noise_var.cwiseSqrt().cwiseInverse().asDiagonal() * fwd.ftilde;
        const Eigen::BDCSVD<Matrix> svd(bh, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& sv = svd.singularValues();
        const Vector s2 = sv.array().square();
        const Vector dvec = (s2.array() / (1.0 + s2.array())).matrix();
        const Matrix y = prior.factor.solve_L(Matrix(svd.matrixV()));  // L^{-1} V
        Matrix my;
        Vector tdiag;
        if (cfg_.mode == SeminormMode::M) {
            my = ctx_.mass * y;
            tdiag = (y.array() * my.array()).colwise().sum().transpose();
        } else {
            tdiag = Vector::Ones(sv.size());
        }
        out.value -= dvec.dot(tdiag);

        if (with_gradient && mi > 0) {
            // dPhi/dF_int = Rt^T with Rt = -(2/gamma) L^{-1} Gamma_post,w T V C U_int^T,
            // C = S/(1+S^2).
            const Vector c = (sv.array() / (1.0 + s2.array())).matrix();
            const Matrix cu = c.asDiagonal() * svd.matrixU().topRows(mi).transpose();  // p x mi
            Matrix rt;
            if (cfg_.mode == SeminormMode::M) {
                const Matrix p = y.transpose() * my;  // V^T T V
                rt = prior.covariance_apply(Matrix(ctx_.mass * (y * cu)));
                rt.noalias() -= y * (dvec.asDiagonal() * (p * cu));
            } else {
                rt = y * ((1.0 - dvec.array()).matrix().asDiagonal() * cu);
            }
            rt *= -2.0 / ctx_.gamma_int;
            for (int i = 0; i < m; ++i) {
                for (int a = 0; a < 2; ++a) {
                    double acc = 0.0;
                    for (int j = 0; j < mt; ++j) {
                        const Eigen::Index row = static_cast<Eigen::Index>(j) * ms + (a + 1) * m + i;
                        acc += f_all.row(row).dot(rt.col(static_cast<Eigen::Index>(j) * m + i));
                    }
                    out.gradient(2 * i + a) = acc;
                }
            }
        }
    }

    if (cfg_.overlap_weight > 0.0) {
        const PenaltyValue pen = overlap_penalty(d, cfg_.overlap_weight);
        out.penalty = pen.value;
        out.value += pen.value;
        if (with_gradient) out.gradient += pen.gradient;
    }
    return out;
}

double phi_A(const DesignProblem& problem, const SensorDesign& d) { return problem.evaluate(d, false).value; }

Vector grad_phi_A(const DesignProblem& problem, const SensorDesign& d) {
    const PhiEvaluation e = problem.evaluate(d, true);
    if (!e.feasible) throw DesignInfeasibleError("gradient requested for an infeasible design");
    return e.gradient;
}

std::vector<double> OptTrajectory::shifted() const {
    std::vector<double> s;
    for (double v : phi) s.push_back(v - phi.front());
    return s;
}

namespace {

Vector project_flat(const AdmissibleRegion& region, const Vector& x) {
    Vector p(x.size());
    for (Eigen::Index i = 0; i + 1 < x.size(); i += 2) {
        const Point q = region.project(Point(x(i), x(i + 1)));
        p(i) = q.x();
        p(i + 1) = q.y();
    }
    return p;
}

double max_displacement(const Vector& dx) {
    double m = 0.0;
    for (Eigen::Index i = 0; i + 1 < dx.size(); i += 2) m = std::max(m, dx.segment<2>(i).norm());
    return m;
}

}  // namespace

OptTrajectory sliding_sensors_optimize(const DesignProblem& problem, const SensorDesign& p0, const SlidingConfig& cfg) {
    if (!problem.feasible(p0)) throw DesignInfeasibleError("initial design is not feasible");
    const AdmissibleRegion& region = problem.config().region;
    const double diam = problem.context().mesh->diameter();

    OptTrajectory traj;
    SensorDesign cur = p0;
    PhiEvaluation ev = problem.evaluate(cur, true);
    const double tol = cfg.grad_tol * std::abs(ev.value) / diam;

    auto projected_gradient_norm = [&](const Vector& x, const Vector& g) {
        const double gmax = g.cwiseAbs().maxCoeff();
        if (!(gmax > 0.0)) return 0.0;
        const double t = 1e-6 * diam / gmax;
        return ((x - project_flat(region, x - t * g)) / t).cwiseAbs().maxCoeff();
    };

    Vector x = cur.flatten();
    double pg = x.size() ? projected_gradient_norm(x, ev.gradient) : 0.0;
    traj.iterates.push_back(cur);
    traj.phi.push_back(ev.value);
    traj.steps.push_back(0.0);
    traj.grad_norms.push_back(pg);

    double alpha = 0.0;
    traj.termination = "max_iterations";
    for (int it = 0; it < cfg.max_iterations; ++it) {
        if (pg <= tol) {
            traj.termination = "gradient";
            break;
        }
        const Vector& g = ev.gradient;
        alpha = alpha > 0.0 ? 2.0 * alpha : cfg.initial_displacement * diam / g.cwiseAbs().maxCoeff();
        bool accepted = false;
        bool tiny = false;
        for (int h = 0; h <= cfg.max_halvings; ++h, alpha *= cfg.backtrack) {
            const Vector trial = project_flat(region, x - alpha * g);
            const Vector dx = trial - x;
            if (max_displacement(dx) < cfg.step_tol * diam) {
                tiny = true;
                break;
            }
            const SensorDesign cand = cur.with_flat(trial);
            const PhiEvaluation tev = problem.evaluate(cand, false);
            if (tev.feasible && tev.value <= ev.value && tev.value <= ev.value + cfg.armijo * g.dot(dx)) {
                traj.steps.push_back(max_displacement(dx));
                cur = cand;
                x = trial;
                ev = problem.evaluate(cur, true);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            traj.termination = tiny ? "step" : "line_search";
            break;
        }
        pg = projected_gradient_norm(x, ev.gradient);
        traj.iterates.push_back(cur);
        traj.phi.push_back(ev.value);
        traj.grad_norms.push_back(pg);
    }
    if (traj.termination == "max_iterations" && pg <= tol) traj.termination = "gradient";
    return traj;
}

}  // namespace ironloss
