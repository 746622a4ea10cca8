#pragma once

#include <vector>

#include "ironloss/fem.hpp"

namespace ironloss {

/// Uniform observation grid t_j = j T / m_t, j = 1..m_t, with `substeps`
/// integration steps per observation interval.
struct TimeGrid {
    double final_time = 1.0;
    int observations = 1;
    int substeps = 10;

    void validate() const;
    double dt() const { return final_time / (static_cast<double>(observations) * substeps); }
    double time(int j) const { return final_time * j / observations; }
    int total_steps() const { return observations * substeps; }
};

/// Implicit midpoint integrator for M_rho u' + K u = load with u(0) = 0.
/// The step matrix M_rho + dt/2 K is factorized once.
class MidpointPropagator {
public:
    MidpointPropagator(const SparseMatrix& m_rho, const SparseMatrix& k, const TimeGrid& grid);

    const TimeGrid& grid() const { return grid_; }
    int size() const { return static_cast<int>(explicit_part_.rows()); }

    /// Snapshots at all observation times for a batch of loads (one load per
    /// column). Entry j-1 of the result holds u(t_j) for every load.
    std::vector<Matrix> propagate(const Matrix& loads) const;
    /// Single load: column j-1 is u(t_j).
    Matrix propagate(const Vector& load) const;

private:
    TimeGrid grid_;
    CholeskyFactor step_;
    SparseMatrix explicit_part_;
};

/// Dense forward map split into internal (design-dependent) and boundary rows.
/// Within each block the row of sensor i at observation j (1-based) is
/// (j-1) * sensors + i.
struct ForwardBlocks {
    Matrix internal;
    Matrix boundary;
    int m_int = 0;
    int m_bdry = 0;
    int m_t = 0;

    int cols() const;
    int rows() const { return static_cast<int>(internal.rows() + boundary.rows()); }
    Matrix stacked() const;
};

/// Rows of F = [B Psi_1 M; ...; B Psi_{m_t} M] for the sensor rows B, built
/// by propagating the columns of B^T and multiplying snapshots by M.
Matrix assemble_forward_rows(const SparseMatrix& mass, const MidpointPropagator& propagator, const SparseMatrix& rows);

ForwardBlocks assemble_forward_blocks(const SparseMatrix& mass, const MidpointPropagator& propagator,
                                      const SparseMatrix& internal_rows, const SparseMatrix& boundary_rows);

/// y = [F_int x; F_bdry x].
Vector apply_forward(const ForwardBlocks& blocks, const Vector& x);

/// Exact-in-time reference for the semi-discrete system through the
/// generalized eigenpairs K v = mu M_rho v (dense; n <= 2000).
class SpectralOracle {
public:
    static constexpr int max_size = 2000;

    SpectralOracle(const SparseMatrix& m_rho, const SparseMatrix& k);

    /// u(t) = sum_i (1 - exp(-mu_i t)) / mu_i * v_i v_i^T load.
    Vector solution(const Vector& load, double t) const;
    /// Limit t -> infinity, i.e. K^{-1} load.
    Vector steady_state(const Vector& load) const;
    /// Dense solution operator (I - exp(-M_rho^{-1} K t)) K^{-1}.
    Matrix exact_propagator(double t) const;

    const Vector& eigenvalues() const { return mu_; }

private:
    Vector mu_;
    Matrix v_;
};

inline Vector spectral_reference(const SparseMatrix& m_rho, const SparseMatrix& k, const Vector& load, double t) {
    return SpectralOracle(m_rho, k).solution(load, t);
}

/// Largest time scale 1/mu_min of the pencil (K, M_rho), by inverse iteration.
double thermal_time_constant(const SparseMatrix& m_rho, const SparseMatrix& k);

}  // namespace ironloss
