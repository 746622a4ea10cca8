#include "ironloss/fem.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <sstream>
#include <vector>

namespace ironloss {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Entries (a,b) and (b,a) receive the same contributions in the same order,
// so the assembled matrix is symmetric bit for bit.
template <int N>
void scatter(Triplets& out, const std::array<int, N>& dofs, const Eigen::Matrix<double, N, N>& local) {
    for (int a = 0; a < N; ++a) {
        out.emplace_back(dofs[a], dofs[a], local(a, a));
        for (int b = a + 1; b < N; ++b) {
            const double v = local(a, b);
            out.emplace_back(dofs[a], dofs[b], v);
            out.emplace_back(dofs[b], dofs[a], v);
        }
    }
}

SparseMatrix from_triplets(int n, const Triplets& t) {
    SparseMatrix m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

void require_spd(const Eigen::Matrix2d& k, const char* what, bool allow_zero) {
    if (k(0, 1) != k(1, 0)) throw AssemblyError(std::string(what) + " must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(k);
    const double lmin = es.eigenvalues()(0);
    if (allow_zero ? lmin < 0.0 : !(lmin > 0.0)) {
        throw AssemblyError(std::string(what) + (allow_zero ? " must be positive semidefinite" : " must be positive definite"));
    }
}

}  // namespace

void MaterialModel::validate() const {
    for (Subdomain s : {Subdomain::Whole, Subdomain::Core, Subdomain::Coil}) {
        if (!(rho(s) > 0.0)) throw AssemblyError("rho must be positive");
        require_spd(kappa(s), "kappa", false);
    }
    if (!(h > 0.0)) throw AssemblyError("Robin coefficient h must be positive");
    if (kappa_ins < 0.0 || !(d_ins > 0.0)) throw AssemblyError("invalid insulating layer parameters");
}

MaterialModel transformer_material() {
    MaterialModel m;
    m.rho.core = 3.43e6;
    m.rho.coil = 3.26e6;
    m.rho.whole = m.rho.core;
    m.kappa.core = 10.0 * Eigen::Matrix2d::Identity();
    m.kappa.coil = 26.0 * Eigen::Matrix2d::Identity();
    m.kappa.whole = m.kappa.core;
    m.h = 14.0;
    m.kappa_ins = 0.028;
    m.d_ins = 5e-4;
    return m;
}

Eigen::Matrix3d local_mass(const Mesh& mesh, int t) {
    const double area = mesh.triangle_area(t);
    if (!(area > 0.0)) throw AssemblyError("degenerate triangle");
    Eigen::Matrix3d m;
    m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
    return (area / 12.0) * m;
}

Eigen::Matrix3d local_stiffness(const Mesh& mesh, int t, const Eigen::Matrix2d& kappa) {
    const double area = mesh.triangle_area(t);
    if (!(area > 0.0)) throw AssemblyError("degenerate triangle");
    const Eigen::Matrix<double, 3, 2> g = mesh.barycentric_gradients(t);
    Eigen::Matrix3d k;
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            k(a, b) = area * g.row(a).dot(kappa * g.row(b).transpose());
            k(b, a) = k(a, b);
        }
    }
    return k;
}

SparseMatrix assemble_mass(const Mesh& mesh, const ScalarField& weight) {
    Triplets trips;
    trips.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const double w = weight(mesh.label(t));
        if (!(w > 0.0)) throw AssemblyError("mass weight must be positive");
        const Eigen::Matrix3d local = w * local_mass(mesh, t);
        scatter<3>(trips, mesh.triangle(t), local);
    }
    return from_triplets(mesh.num_nodes(), trips);
}

SparseMatrix assemble_volume_stiffness(const Mesh& mesh, const TensorField& kappa) {
    Triplets trips;
    trips.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        scatter<3>(trips, mesh.triangle(t), local_stiffness(mesh, t, kappa(mesh.label(t))));
    }
    return from_triplets(mesh.num_nodes(), trips);
}

SparseMatrix assemble_robin(const Mesh& mesh, double h) {
    Triplets trips;
    for (const auto& e : mesh.boundary_edges()) {
        if (!e.has(edge_tag::robin)) continue;
        const double len = (mesh.node(e.a) - mesh.node(e.b)).norm();
        Eigen::Matrix2d local;
        local << 2, 1, 1, 2;
        scatter<2>(trips, {e.a, e.b}, (h * len / 6.0) * local);
    }
    return from_triplets(mesh.num_nodes(), trips);
}

SparseMatrix assemble_interface_coupling(const Mesh& mesh, double kappa_ins, double d_ins) {
    if (!(d_ins > 0.0) || kappa_ins < 0.0) throw AssemblyError("invalid insulating layer parameters");
    const double coeff = kappa_ins / d_ins;
    Eigen::Matrix4d pattern;
    pattern << 2, 1, -2, -1,
               1, 2, -1, -2,
              -2, -1, 2, 1,
              -1, -2, 1, 2;
    Triplets trips;
    for (const auto& e : mesh.interface_edges()) {
        for (int k = 0; k < 2; ++k) {
            if (e.core[k] < 0 || e.coil[k] < 0 || e.core[k] == e.coil[k]) {
                throw AssemblyError("interface edge without a duplicated node pair");
            }
        }
        const double len = (mesh.node(e.core[0]) - mesh.node(e.core[1])).norm();
        scatter<4>(trips, {e.core[0], e.core[1], e.coil[0], e.coil[1]}, (coeff * len / 6.0) * pattern);
    }
    return from_triplets(mesh.num_nodes(), trips);
}

SparseMatrix assemble_stiffness(const Mesh& mesh, const MaterialModel& material) {
    material.validate();
    SparseMatrix k = assemble_volume_stiffness(mesh, material.kappa);
    if (mesh.boundary_length(edge_tag::robin) <= 0.0) {
        warn("stiffness matrix has no Robin boundary; the steady-state operator is singular");
    }
    k += assemble_robin(mesh, material.h);
    if (!mesh.interface_edges().empty()) {
        if (!(material.kappa_ins > 0.0)) {
            throw AssemblyError("mesh has an insulating interface but kappa_ins is not positive");
        }
        k += assemble_interface_coupling(mesh, material.kappa_ins, material.d_ins);
    }
    k.makeCompressed();
    return k;
}

SparseMatrix assemble_prior_precision(const Mesh& mesh, const ScalarField& beta, const TensorField& alpha) {
    for (Subdomain s : {Subdomain::Whole, Subdomain::Core, Subdomain::Coil}) {
        if (!(beta(s) > 0.0)) throw AssemblyError("prior beta must be positive");
        require_spd(alpha(s), "prior alpha", true);
    }
    SparseMatrix q = assemble_mass(mesh, beta);
    q += assemble_volume_stiffness(mesh, alpha);
    q.makeCompressed();
    return q;
}

struct CholeskyFactor::Impl {
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
    SparseMatrix lower;  // C with P A P^T = C C^T
    SparseMatrix upper;  // C^T
};

CholeskyFactor::CholeskyFactor(const SparseMatrix& a) {
    if (a.rows() != a.cols()) throw DimensionError("Cholesky factorization of a non-square matrix");
    auto impl = std::make_shared<Impl>();
    impl->llt.compute(a);
    if (impl->llt.info() != Eigen::Success) {
        throw DefinitenessError("sparse Cholesky factorization hit a non-positive pivot");
    }
    impl->lower = impl->llt.matrixL();
    for (Eigen::Index j = 0; j < impl->lower.outerSize(); ++j) {
        const auto start = impl->lower.outerIndexPtr()[j];
        if (impl->lower.innerIndexPtr()[start] != j) throw AssemblyError("Cholesky factor column lacks a leading diagonal");
    }
    impl->upper = impl->lower.transpose();
    impl_ = std::move(impl);
}

int CholeskyFactor::size() const { return impl_ ? static_cast<int>(impl_->lower.rows()) : 0; }

long CholeskyFactor::nonzeros() const { return impl_ ? impl_->lower.nonZeros() : 0; }

namespace {
void check_rows(const CholeskyFactor& f, const Matrix& b) {
    if (b.rows() != f.size()) throw DimensionError("right-hand side size does not match the factor");
}
}  // namespace

Matrix CholeskyFactor::solve(const Matrix& b) const {
    check_rows(*this, b);
    return impl_->llt.solve(b);
}

void CholeskyFactor::solve_in_place(RowMatrix& x) const {
    if (x.rows() != size()) throw DimensionError("right-hand side size does not match the factor");
    const Eigen::Index n = x.rows(), k = x.cols();
    if (k == 0) return;
    const SparseMatrix& c = impl_->lower;
    const auto& perm = impl_->llt.permutationP().indices();
    RowMatrix y(n, k);
    for (Eigen::Index i = 0; i < n; ++i) y.row(perm(i)) = x.row(i);
    const int* outer = c.outerIndexPtr();
    const int* inner = c.innerIndexPtr();
    const double* val = c.valuePtr();
    double* yd = y.data();
    // C z = y: the diagonal leads each column of the simplicial factor.
    for (Eigen::Index j = 0; j < n; ++j) {
        double* yj = yd + j * k;
        const double inv = 1.0 / val[outer[j]];
        for (Eigen::Index q = 0; q < k; ++q) yj[q] *= inv;
        for (int p = outer[j] + 1; p < outer[j + 1]; ++p) {
            double* yi = yd + static_cast<Eigen::Index>(inner[p]) * k;
            const double v = val[p];
            for (Eigen::Index q = 0; q < k; ++q) yi[q] -= v * yj[q];
        }
    }
    // C^T w = z: column j of C is row j of C^T.
    for (Eigen::Index j = n - 1; j >= 0; --j) {
        double* yj = yd + j * k;
        for (int p = outer[j] + 1; p < outer[j + 1]; ++p) {
            const double* yi = yd + static_cast<Eigen::Index>(inner[p]) * k;
            const double v = val[p];
            for (Eigen::Index q = 0; q < k; ++q) yj[q] -= v * yi[q];
        }
        const double inv = 1.0 / val[outer[j]];
        for (Eigen::Index q = 0; q < k; ++q) yj[q] *= inv;
    }
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = y.row(perm(i));
}

Matrix CholeskyFactor::solve_L(const Matrix& b) const {
    check_rows(*this, b);
    Matrix x = impl_->upper.triangularView<Eigen::Upper>().solve(b);
    return impl_->llt.permutationPinv() * x;
}

Matrix CholeskyFactor::solve_Lt(const Matrix& b) const {
    check_rows(*this, b);
    Matrix x = impl_->llt.permutationP() * b;
    impl_->lower.triangularView<Eigen::Lower>().solveInPlace(x);
    return x;
}

Matrix CholeskyFactor::apply_L(const Matrix& b) const {
    check_rows(*this, b);
    Matrix x = impl_->llt.permutationP() * b;
    return impl_->upper * x;
}

Matrix CholeskyFactor::apply_Lt(const Matrix& b) const {
    check_rows(*this, b);
    Matrix x = impl_->lower * b;
    return impl_->llt.permutationPinv() * x;
}

SparseMatrix CholeskyFactor::factor_L() const {
    // L = C^T P; column j of L is column P(j) of C^T.
    SparseMatrix p(size(), size());
    const auto& perm = impl_->llt.permutationP();
    std::vector<Eigen::Triplet<double>> t;
    for (int j = 0; j < size(); ++j) t.emplace_back(perm.indices()(j), j, 1.0);
    p.setFromTriplets(t.begin(), t.end());
    return SparseMatrix(impl_->upper * p);
}

double trace_inverse_product(const CholeskyFactor& a, const SparseMatrix& b) {
    const int n = a.size();
    if (b.rows() != n || b.cols() != n) throw DimensionError("trace_inverse_product: size mismatch");
    constexpr int block = 64;
    double tr = 0.0;
    for (int j = 0; j < n; j += block) {
        const int w = std::min(block, n - j);
        const Matrix x = a.solve(Matrix(b.middleCols(j, w)));
        for (int k = 0; k < w; ++k) tr += x(j + k, k);
    }
    return tr;
}

}  // namespace ironloss
