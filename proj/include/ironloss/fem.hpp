#pragma once

#include <memory>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "ironloss/mesh.hpp"

namespace ironloss {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A coefficient that is constant on each subdomain.
template <class T>
struct PerSubdomain {
    T whole{};
    T core{};
    T coil{};

    static PerSubdomain uniform(const T& v) { return {v, v, v}; }
    const T& operator()(Subdomain s) const {
        switch (s) {
            case Subdomain::Core: return core;
            case Subdomain::Coil: return coil;
            default: return whole;
        }
    }
};

using ScalarField = PerSubdomain<double>;
using TensorField = PerSubdomain<Eigen::Matrix2d>;

inline TensorField isotropic(double k) { return TensorField::uniform(k * Eigen::Matrix2d::Identity()); }

/// Thermal material data of the forward model.
struct MaterialModel {
    ScalarField rho = ScalarField::uniform(1.0);  ///< density times heat capacity
    TensorField kappa = isotropic(1.0);           ///< heat conductivity
    double h = 1.0;                               ///< Robin heat transfer coefficient
    double kappa_ins = 0.0;                       ///< insulating layer conductivity
    double d_ins = 1.0;                           ///< insulating layer thickness

    void validate() const;
};

/// Material of the transformer half cross-section (iron core A, coil B).
MaterialModel transformer_material();

/// Mass matrix weighted by a per-subdomain scalar; weight 1 gives M, rho gives M_rho.
SparseMatrix assemble_mass(const Mesh& mesh, const ScalarField& weight);
/// Volume part of the conductivity form, no boundary terms.
SparseMatrix assemble_volume_stiffness(const Mesh& mesh, const TensorField& kappa);
/// h-weighted edge mass on Robin edges.
SparseMatrix assemble_robin(const Mesh& mesh, double h);
/// (kappa_ins/d_ins) * integral of (u_B - u_A)(v_B - v_A) over the interface.
SparseMatrix assemble_interface_coupling(const Mesh& mesh, double kappa_ins, double d_ins);
/// Volume stiffness + Robin term + interface coupling (when the mesh has one).
SparseMatrix assemble_stiffness(const Mesh& mesh, const MaterialModel& material);
/// Prior precision: beta-weighted mass plus alpha-weighted stiffness.
SparseMatrix assemble_prior_precision(const Mesh& mesh, const ScalarField& beta, const TensorField& alpha);

/// Local matrices on a single triangle, exposed for testing.
Eigen::Matrix3d local_mass(const Mesh& mesh, int t);
Eigen::Matrix3d local_stiffness(const Mesh& mesh, int t, const Eigen::Matrix2d& kappa);

/// Fill-reducing sparse Cholesky factorization of an SPD matrix A, exposed as
/// A = L^T L. Internally the factor is P A P^T = C C^T, and L := C^T P, so
/// every L-solve applies the permutation.
class CholeskyFactor {
public:
    CholeskyFactor() = default;
    explicit CholeskyFactor(const SparseMatrix& a);

    int size() const;

    Matrix solve(const Matrix& b) const;     ///< A^{-1} b
    Matrix solve_L(const Matrix& b) const;   ///< L^{-1} b
    Matrix solve_Lt(const Matrix& b) const;  ///< L^{-T} b
    Matrix apply_L(const Matrix& b) const;   ///< L b
    Matrix apply_Lt(const Matrix& b) const;  ///< L^T b

    /// In-place A^{-1} x for a row-major block: one sweep over the factor
    /// updates all columns at once, much faster than column-by-column solves
    /// when x has tens of columns.
    void solve_in_place(RowMatrix& x) const;

    Vector solve(const Vector& b) const { return solve(Matrix(b)).col(0); }
    Vector solve_L(const Vector& b) const { return solve_L(Matrix(b)).col(0); }
    Vector solve_Lt(const Vector& b) const { return solve_Lt(Matrix(b)).col(0); }
    Vector apply_L(const Vector& b) const { return apply_L(Matrix(b)).col(0); }
    Vector apply_Lt(const Vector& b) const { return apply_Lt(Matrix(b)).col(0); }

    /// Explicit sparse L with L^T L = A (for tests and diagnostics).
    SparseMatrix factor_L() const;
    /// Number of nonzeros in the triangular factor.
    long nonzeros() const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

/// Exact dense representation, convenient for oracles on small problems.
inline Matrix to_dense(const SparseMatrix& a) { return Matrix(a); }

/// tr(A^{-1} B) for SPD A given by its factor and sparse B, by blocked solves.
double trace_inverse_product(const CholeskyFactor& a, const SparseMatrix& b);

}  // namespace ironloss
