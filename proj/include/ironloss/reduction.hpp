#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Cholesky>

#include "ironloss/bayes.hpp"

namespace ironloss {

/// Matrix-free operator acting on blocks of column vectors.
struct LinearOperator {
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::function<Matrix(const Matrix&)> apply;
    std::function<Matrix(const Matrix&)> apply_transpose;
};

LinearOperator dense_operator(Matrix a);

/// x -> F L^{-1} x and y -> L^{-T} F^T y.
LinearOperator prior_condition(Matrix f, const CholeskyFactor& l);

struct RangeResult {
    Matrix q;
    bool rank_deficient = false;
};

/// Randomized range finder: a Gaussian start block in the row space of A,
/// followed by power_iters + 1 passes of W = orth(A^T Q), Q = orth(A W).
RangeResult randomized_range(const LinearOperator& a, int columns, int power_iters, std::uint64_t seed);

/// Truncated factors of the prior-conditioned boundary operator,
/// F_bdry L^{-1} ~ U diag(sigma) V^T.
struct ReducedBoundaryOp {
    Matrix u;
    Vector sigma;
    Matrix v;
    int power_iters = 2;
    int oversample = 10;
    std::uint64_t seed = 0;
    bool rank_deficient = false;

    int rank() const { return static_cast<int>(sigma.size()); }
    Eigen::Index rows() const { return u.rows(); }
    Eigen::Index cols() const { return v.rows(); }
};

ReducedBoundaryOp reduce_boundary_operator(const LinearOperator& fpr, int rank, int power_iters = 2,
                                           std::uint64_t seed = 0, int oversample = 10);

/// Number of singular values above rel * sigma_max.
int numerical_rank(const Vector& sigma, double rel = 1e-10);

/// Boundary data in reduced coordinates, U^T y (exact for Gamma_bdry = gamma^2 I).
Vector reduce_data(const ReducedBoundaryOp& op, const Vector& y_bdry);
Matrix reduce_data(const ReducedBoundaryOp& op, const Matrix& y_bdry);

/// Prior-conditioned stacked operator [F_int L^{-1}; Sigma V^T], the matrix
/// G = C^T = L^{-1} Ftilde^T and the diagonal reduced noise covariance.
struct ReducedForward {
    Matrix ftilde;
    Matrix g;
    Vector noise_var;
    int internal_rows = 0;
    int rank = 0;

    int rows() const { return internal_rows + rank; }
};

/// `reduced` may be null (no boundary data).
ReducedForward assemble_reduced_forward(const PriorModel& prior, const Matrix& f_int, const ReducedBoundaryOp* reduced,
                                        double gamma_int, double gamma_bdry);

/// Low-rank posterior Gamma_pr - G H^{-1} G^T with H = Ftilde Ftilde^T + noise.
/// Holds a reference to `prior`, which must outlive this object.
class ReducedPosterior {
public:
    ReducedPosterior(const PriorModel& prior, ReducedForward fwd);

    const ReducedForward& forward() const { return fwd_; }
    const Eigen::LLT<Matrix>& h() const { return h_; }

    /// Posterior mean for internal data and reduced boundary data (columns).
    Matrix mean(const Matrix& y_int, const Matrix& y_bdry_reduced) const;
    Vector mean(const Vector& y_int, const Vector& y_bdry_reduced) const;
    Matrix covariance_apply(const Matrix& a) const;

    /// tr(H^{-1} G^T A G), the data correction to tr(Gamma_pr A).
    double trace_correction(const SparseMatrix& a) const;
    /// tr(Gamma_post A) given tr(Gamma_pr A).
    double trace(const SparseMatrix& a, double prior_trace) const { return prior_trace - trace_correction(a); }
    /// tr(Gamma_post Gamma_pr^{-1}) = n - tr(H^{-1} Ftilde Ftilde^T).
    double trace_precision() const;

private:
    const PriorModel* prior_;
    ReducedForward fwd_;
    Eigen::LLT<Matrix> h_;
};

/// Binary cache of a ReducedBoundaryOp keyed by a caller-supplied hash.
void write_reduced_op(const std::string& path, const ReducedBoundaryOp& op, std::uint64_t key);
/// nullopt when the file is missing or was built for another key.
std::optional<ReducedBoundaryOp> read_reduced_op(const std::string& path, std::uint64_t key);

}  // namespace ironloss
