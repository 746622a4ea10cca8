#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ironloss/oed.hpp"

namespace ironloss {

SensorDesign SparsificationState::selected_design() const {
    SensorDesign d = candidates;
    d.positions.clear();
    for (int i : selected) d.positions.push_back(candidates.positions[i]);
    return d;
}

// In whitened coordinates v = L x the posterior precision is
// I + sum_rows (F L^{-1})^T Gamma_noise^{-1} (F L^{-1}), so
// Phi = tr(Gamma_post A^T A) = <L^{-T} A^T A L^{-1}, H^{-1}>. H - I lives in
// the span P of the whitened data directions, hence
// H^{-1} = (I - P P^T) + P (P^T H P)^{-1} P^T.
WeightedDesignObjective::WeightedDesignObjective(const DesignProblem& problem, const SensorDesign& candidates,
                                                 double span_tol) {
    const auto& ctx = problem.context();
    const PriorModel& prior = *ctx.prior;
    const int n = prior.size();
    if (n > dense_guard) throw GuardError("weighted design objective limited to n <= " + std::to_string(dense_guard));
    const int c = candidates.count();
    const int mt = ctx.propagator->grid().observations;
    for (const auto& p : candidates.positions) {
        if (!problem.config().region.contains(p)) throw DesignInfeasibleError("candidate outside the admissible region");
    }

    Matrix w;
    if (c > 0) {
        const SparseMatrix b = build_internal_sensor_rows(*ctx.mesh, candidates).rows;
        const Matrix f = assemble_forward_rows(ctx.mass, *ctx.propagator, b);
        w = prior.factor.solve_Lt(Matrix(f.transpose())) / ctx.gamma_int;  // n x (mt c)
    }

    std::vector<Matrix> blocks(c);
    offset_.assign(1, 0);
    for (int i = 0; i < c; ++i) {
        Matrix a(n, mt);
        for (int j = 0; j < mt; ++j) a.col(j) = w.col(static_cast<Eigen::Index>(j) * c + i);
        Eigen::SelfAdjointEigenSolver<Matrix> es(a.transpose() * a);
        const Vector& lam = es.eigenvalues();
        int keep = 0;
        for (Eigen::Index k = 0; k < lam.size(); ++k) keep += lam(k) > span_tol;
        blocks[i] = a * es.eigenvectors().rightCols(keep);
        offset_.push_back(offset_.back() + keep);
    }
    Matrix zfull(n, offset_.back());
    for (int i = 0; i < c; ++i) zfull.middleCols(offset_[i], offset_[i + 1] - offset_[i]) = blocks[i];

    Matrix vs;
    if (ctx.reduced && ctx.reduced->rank() > 0) vs = ctx.reduced->v * (ctx.reduced->sigma / ctx.gamma_bdry).asDiagonal();

    // A direction with squared singular value below span_tol changes
    // H = I + ... by less than that; dropping all of them moves Phi by at
    // most span_tol * tr(T). They are left to the prior.
    Matrix gram = zfull * zfull.transpose();
    if (vs.cols() > 0) gram.noalias() += vs * vs.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    int r = 0;
    for (Eigen::Index k = 0; k < n; ++k) r += es.eigenvalues()(k) > span_tol;
    const Matrix p = es.eigenvectors().rightCols(r);

    Matrix t;
    if (problem.config().mode == SeminormMode::M) {
        const Matrix t1 = prior.factor.solve_Lt(Matrix(ctx.mass));
        t = prior.factor.solve_Lt(Matrix(t1.transpose()));
        t = 0.5 * (t + t.transpose()).eval();
    } else {
        t = Matrix::Identity(n, n);
    }
    target_ = p.transpose() * t * p;
    outside_ = t.trace() - target_.trace();

    z_ = p.transpose() * zfull;
    base_ = Matrix::Identity(r, r);
    if (vs.cols() > 0) {
        const Matrix pv = p.transpose() * vs;
        base_.noalias() += pv * pv.transpose();
    }
}

double WeightedDesignObjective::evaluate(const Vector& w, Vector* gradient) const {
    if (w.size() != count()) throw DimensionError("weight vector size mismatch");
    Matrix zw = z_;
    for (int i = 0; i < count(); ++i) zw.middleCols(offset_[i], offset_[i + 1] - offset_[i]) *= w(i);
    Matrix h = base_;
    h.selfadjointView<Eigen::Lower>().rankUpdate(zw);
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) throw DefinitenessError("weighted posterior precision is not positive definite");
    const Matrix y = llt.solve(target_);  // H^{-1} T
    const double phi = outside_ + y.trace();
    if (gradient) {
        const Matrix x = llt.solve(Matrix(y.transpose()));  // H^{-1} T H^{-1}
        const Matrix xz = x * z_;
        gradient->resize(count());
        for (int i = 0; i < count(); ++i) {
            const int k0 = offset_[i], k = offset_[i + 1] - offset_[i];
            const double q = (z_.middleCols(k0, k).array() * xz.middleCols(k0, k).array()).sum();
            (*gradient)(i) = -2.0 * w(i) * q;
        }
    }
    return phi;
}

namespace {

struct Surrogate {
    double q, eps, norm;
    Surrogate(double q_, double eps_) : q(q_), eps(eps_), norm(std::pow(1.0 + eps_, q_) - std::pow(eps_, q_)) {}
    double value(double w) const { return (std::pow(w + eps, q) - std::pow(eps, q)) / norm; }
    double slope(double w) const { return q * std::pow(w + eps, q - 1.0) / norm; }
};

bool is_binary(const Vector& w, double tol) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w(i) >= tol && w(i) <= 1.0 - tol) return false;
    }
    return true;
}

}  // namespace

SparsificationState sparsify_design(const DesignProblem& problem, const SensorDesign& candidates,
                                    const SparsifyConfig& cfg) {
    return sparsify_design(WeightedDesignObjective(problem, candidates, cfg.span_tol), candidates, cfg);
}

SparsificationState sparsify_design(const WeightedDesignObjective& obj, const SensorDesign& candidates,
                                    const SparsifyConfig& cfg) {
    if (obj.count() != candidates.count()) throw DimensionError("objective and candidate set differ");
    const int c = obj.count();
    SparsificationState st;
    st.candidates = candidates;
    st.weights = Vector::Constant(c, cfg.initial_weight);

    Vector g0;
    obj.evaluate(st.weights, &g0);
    ++st.evaluations;
    const double gamma0 = c > 0 ? cfg.penalty_scale * g0.cwiseAbs().mean() : 0.0;

    double gamma = gamma0;
    double q = cfg.q_start;
    for (int stage = 0; stage < cfg.max_stages && c > 0; ++stage) {
        st.gamma_schedule.push_back(gamma);
        st.q_schedule.push_back(q);
        const Surrogate pen(q, cfg.epsilon);
        auto total = [&](const Vector& w, Vector* g) {
            double v = obj.evaluate(w, g);
            ++st.evaluations;
            for (int i = 0; i < c; ++i) {
                v += gamma * pen.value(w(i));
                if (g) (*g)(i) += gamma * pen.slope(w(i));
            }
            return v;
        };

        Vector w = st.weights;
        Vector g;
        double j = total(w, &g);
        double alpha = 0.25 / std::max(g.cwiseAbs().maxCoeff(), 1e-300);
        for (int it = 0; it < cfg.inner_iterations; ++it) {
            bool accepted = false;
            Vector wn, gn;
            double jn = 0.0;
            for (int h = 0; h < 30; ++h, alpha *= 0.5) {
                wn = (w - alpha * g).cwiseMax(0.0).cwiseMin(1.0);
                const Vector d = wn - w;
                if (d.cwiseAbs().maxCoeff() < cfg.inner_tol) break;
                jn = total(wn, &gn);
                if (jn <= j + 1e-4 * g.dot(d)) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            const Vector s = wn - w;
            const Vector yv = gn - g;
            w = wn;
            g = gn;
            j = jn;
            const double sy = s.dot(yv);
            alpha = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * alpha;
            if (s.cwiseAbs().maxCoeff() < cfg.inner_tol) break;
        }
        st.weights = w;
        if (is_binary(w, cfg.binary_tol)) {
            st.binary = true;
            break;
        }
        gamma *= cfg.gamma_growth;
        q = std::max(q * cfg.q_factor, cfg.q_min);
    }
    if (c == 0) st.binary = true;
    for (int i = 0; i < c; ++i) {
        if (st.weights(i) > 0.5) st.selected.push_back(i);
    }
    return st;
}

}  // namespace ironloss
