#include "ironloss/forward.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace ironloss {

void TimeGrid::validate() const {
    if (!(final_time > 0.0) || !std::isfinite(final_time)) throw ConfigError("time grid: final time must be positive");
    if (observations < 1) throw ConfigError("time grid: at least one observation time required");
    if (substeps < 1) throw ConfigError("time grid: substeps must be >= 1");
}

MidpointPropagator::MidpointPropagator(const SparseMatrix& m_rho, const SparseMatrix& k, const TimeGrid& grid)
    : grid_(grid) {
    grid_.validate();
    if (m_rho.rows() != k.rows() || m_rho.cols() != k.cols() || m_rho.rows() != m_rho.cols()) {
        throw DimensionError("propagator: M_rho and K must be square and of equal size");
    }
    const double half = 0.5 * grid_.dt();
    step_ = CholeskyFactor(SparseMatrix(m_rho + half * k));
    explicit_part_ = m_rho - half * k;
}

std::vector<Matrix> MidpointPropagator::propagate(const Matrix& loads) const {
    if (loads.rows() != size()) throw DimensionError("propagator: load size mismatch");
    const double dt = grid_.dt();
    const RowMatrix forcing = dt * loads;
    std::vector<Matrix> snaps;
    snaps.reserve(grid_.observations);
    RowMatrix u = RowMatrix::Zero(loads.rows(), loads.cols());
    RowMatrix rhs(loads.rows(), loads.cols());
    for (int j = 1; j <= grid_.observations; ++j) {
        for (int s = 0; s < grid_.substeps; ++s) {
            rhs.noalias() = explicit_part_ * u;
            rhs += forcing;
            step_.solve_in_place(rhs);
            u.swap(rhs);
        }
        snaps.emplace_back(u);
    }
    return snaps;
}

Matrix MidpointPropagator::propagate(const Vector& load) const {
    const auto snaps = propagate(Matrix(load));
    Matrix out(load.size(), grid_.observations);
    for (int j = 0; j < grid_.observations; ++j) out.col(j) = snaps[j].col(0);
    return out;
}

int ForwardBlocks::cols() const {
    if (internal.rows() > 0) return static_cast<int>(internal.cols());
    return static_cast<int>(boundary.cols());
}

Matrix ForwardBlocks::stacked() const {
    Matrix f(rows(), cols());
    if (internal.rows() > 0) f.topRows(internal.rows()) = internal;
    if (boundary.rows() > 0) f.bottomRows(boundary.rows()) = boundary;
    return f;
}

Matrix assemble_forward_rows(const SparseMatrix& mass, const MidpointPropagator& propagator, const SparseMatrix& rows) {
    const int n = propagator.size();
    if (rows.cols() != n || mass.rows() != n) throw DimensionError("forward rows: column count must equal n");
    const int ms = static_cast<int>(rows.rows());
    const int mt = propagator.grid().observations;
    Matrix f(static_cast<Eigen::Index>(ms) * mt, n);
    if (ms == 0) return f;
    // F_j^T = M Psi_j B^T with Psi_j symmetric.
    const Matrix loads = Matrix(rows.transpose());
    const auto snaps = propagator.propagate(loads);
    for (int j = 0; j < mt; ++j) {
        f.middleRows(static_cast<Eigen::Index>(j) * ms, ms) = (mass * snaps[j]).transpose();
    }
    return f;
}

ForwardBlocks assemble_forward_blocks(const SparseMatrix& mass, const MidpointPropagator& propagator,
                                      const SparseMatrix& internal_rows, const SparseMatrix& boundary_rows) {
    ForwardBlocks b;
    b.m_int = static_cast<int>(internal_rows.rows());
    b.m_bdry = static_cast<int>(boundary_rows.rows());
    b.m_t = propagator.grid().observations;
    b.internal = assemble_forward_rows(mass, propagator, internal_rows);
    b.boundary = assemble_forward_rows(mass, propagator, boundary_rows);
    return b;
}

Vector apply_forward(const ForwardBlocks& blocks, const Vector& x) {
    if (x.size() != blocks.cols()) throw DimensionError("apply_forward: source size mismatch");
    Vector y(blocks.rows());
    if (blocks.internal.rows() > 0) y.head(blocks.internal.rows()) = blocks.internal * x;
    if (blocks.boundary.rows() > 0) y.tail(blocks.boundary.rows()) = blocks.boundary * x;
    return y;
}

SpectralOracle::SpectralOracle(const SparseMatrix& m_rho, const SparseMatrix& k) {
    if (m_rho.rows() > max_size) {
        throw GuardError("spectral oracle limited to n <= " + std::to_string(max_size));
    }
    if (m_rho.rows() != k.rows()) throw DimensionError("spectral oracle: size mismatch");
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(Matrix(k), Matrix(m_rho), Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw DefinitenessError("spectral oracle: generalized eigensolve failed");
    mu_ = es.eigenvalues();
    v_ = es.eigenvectors();
    if (mu_.minCoeff() <= 0.0) throw DefinitenessError("spectral oracle: K is not positive definite");
}

Vector SpectralOracle::solution(const Vector& load, double t) const {
    const Vector c = v_.transpose() * load;
    Vector w(mu_.size());
    for (Eigen::Index i = 0; i < mu_.size(); ++i) w(i) = -std::expm1(-mu_(i) * t) / mu_(i) * c(i);
    return v_ * w;
}

Vector SpectralOracle::steady_state(const Vector& load) const {
    const Vector c = v_.transpose() * load;
    return v_ * c.cwiseQuotient(mu_);
}

Matrix SpectralOracle::exact_propagator(double t) const {
    Vector w(mu_.size());
    for (Eigen::Index i = 0; i < mu_.size(); ++i) w(i) = -std::expm1(-mu_(i) * t) / mu_(i);
    return v_ * w.asDiagonal() * v_.transpose();
}

double thermal_time_constant(const SparseMatrix& m_rho, const SparseMatrix& k) {
    const CholeskyFactor kf(k);
    Vector x = Vector::Ones(k.rows());
    double mu = 0.0;
    for (int it = 0; it < 500; ++it) {
        Vector y = kf.solve(Vector(m_rho * x));
        const double norm = std::sqrt(y.dot(m_rho * y));
        y /= norm;
        const double next = y.dot(k * y);  // Rayleigh quotient with y^T M_rho y = 1
        x = y;
        if (it > 0 && std::abs(next - mu) <= 1e-13 * std::abs(next)) {
            mu = next;
            break;
        }
        mu = next;
    }
    return 1.0 / mu;
}

}  // namespace ironloss
