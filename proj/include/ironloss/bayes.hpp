#pragma once

#include <cstdint>
#include <random>

#include "ironloss/forward.hpp"

namespace ironloss {

/// Gaussian prior N(mean, precision^{-1}) with precision = L^T L.
struct PriorModel {
    SparseMatrix precision;
    CholeskyFactor factor;
    Vector mean;

    PriorModel() = default;
    explicit PriorModel(SparseMatrix q, Vector mean = Vector());

    static PriorModel from_parameters(const Mesh& mesh, double beta, double alpha);

    int size() const { return static_cast<int>(precision.rows()); }
    /// Gamma_pr a (two triangular solves per column).
    Matrix covariance_apply(const Matrix& a) const { return factor.solve(a); }
};

/// Independent noise with one standard deviation per sensor group.
struct NoiseModel {
    double gamma_int = 1.0;
    double gamma_bdry = 1.0;

    void validate() const;
    /// Diagonal of Gamma_noise for a stacked [internal; boundary] vector.
    Vector variances(int internal_rows, int boundary_rows) const;
    Vector deviations(int internal_rows, int boundary_rows) const;
    Vector variances(const ForwardBlocks& b) const {
        return variances(static_cast<int>(b.internal.rows()), static_cast<int>(b.boundary.rows()));
    }
};

/// gamma = 0.01 p max|readings| per group. An empty group inherits the other
/// group's value; a nonempty all-zero group is an error.
NoiseModel calibrate_noise(const Vector& clean_internal, const Vector& clean_boundary, double percent);
NoiseModel calibrate_noise(const ForwardBlocks& blocks, const Vector& x_true, double percent);

/// y = F x_true + eps, eps ~ N(0, Gamma_noise).
Vector simulate_measurements(const ForwardBlocks& blocks, const Vector& x_true, const NoiseModel& noise,
                             std::uint64_t seed);
Vector add_noise(const Vector& clean, const Vector& deviations, std::mt19937_64& rng);

enum class PosteriorPath { Direct, Woodbury };

/// Posterior mean for a dense stacked F and diagonal noise variances.
Vector posterior_mean(const PriorModel& prior, const Matrix& f, const Vector& noise_var, const Vector& y,
                      PosteriorPath path);
Vector posterior_mean(const PriorModel& prior, const NoiseModel& noise, const ForwardBlocks& blocks, const Vector& y,
                      PosteriorPath path = PosteriorPath::Woodbury);

/// Several data vectors at once (columns of y); Woodbury form.
Matrix posterior_means(const PriorModel& prior, const Matrix& f, const Vector& noise_var, const Matrix& y);

inline constexpr int dense_guard = 3000;

/// (Gamma_pr^{-1} + F^T Gamma_noise^{-1} F)^{-1}, dense (n <= 3000).
Matrix posterior_covariance_dense(const PriorModel& prior, const Matrix& f, const Vector& noise_var);
/// Gamma_pr - Gamma_pr F^T (F Gamma_pr F^T + Gamma_noise)^{-1} F Gamma_pr, dense (n <= 3000).
Matrix posterior_covariance_woodbury(const PriorModel& prior, const Matrix& f, const Vector& noise_var);

/// tr(Gamma_pr A) for sparse A, by blocked solves.
double prior_trace(const PriorModel& prior, const SparseMatrix& a);
/// tr(Gamma_post A) from the SVD of the whitened forward operator, without
/// forming n x n matrices.
double posterior_trace_woodbury(const PriorModel& prior, const Matrix& f, const Vector& noise_var,
                                const SparseMatrix& a);

Vector sample_prior(const PriorModel& prior, std::mt19937_64& rng);
Vector sample_prior(const PriorModel& prior, std::uint64_t seed);

/// Relative error in the norm induced by the mass matrix.
double reconstruction_error(const Vector& estimate, const Vector& truth, const SparseMatrix& mass);

}  // namespace ironloss
