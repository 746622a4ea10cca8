#include "ironloss/bayes.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

namespace ironloss {

PriorModel::PriorModel(SparseMatrix q, Vector m) : precision(std::move(q)), factor(precision), mean(std::move(m)) {
    if (mean.size() == 0) mean = Vector::Zero(precision.rows());
    if (mean.size() != precision.rows()) throw DimensionError("prior mean size mismatch");
}

PriorModel PriorModel::from_parameters(const Mesh& mesh, double beta, double alpha) {
    return PriorModel(assemble_prior_precision(mesh, ScalarField::uniform(beta), isotropic(alpha)));
}

void NoiseModel::validate() const {
    if (!(gamma_int > 0.0) || !(gamma_bdry > 0.0) || !std::isfinite(gamma_int) || !std::isfinite(gamma_bdry)) {
        throw DataError("noise standard deviations must be positive and finite");
    }
}

Vector NoiseModel::variances(int internal_rows, int boundary_rows) const {
    validate();
    Vector v(internal_rows + boundary_rows);
    v.head(internal_rows).setConstant(gamma_int * gamma_int);
    v.tail(boundary_rows).setConstant(gamma_bdry * gamma_bdry);
    return v;
}

Vector NoiseModel::deviations(int internal_rows, int boundary_rows) const {
    validate();
    Vector v(internal_rows + boundary_rows);
    v.head(internal_rows).setConstant(gamma_int);
    v.tail(boundary_rows).setConstant(gamma_bdry);
    return v;
}

NoiseModel calibrate_noise(const Vector& clean_internal, const Vector& clean_boundary, double percent) {
    if (!(percent > 0.0)) throw DataError("noise percent must be positive");
    auto level = [&](const Vector& v, const char* name) {
        if (v.size() == 0) return 0.0;
        const double m = v.cwiseAbs().maxCoeff();
        if (!(m > 0.0)) throw DataError(std::string("clean ") + name + " data are identically zero");
        return 0.01 * percent * m;
    };
    double gi = level(clean_internal, "internal");
    double gb = level(clean_boundary, "boundary");
    if (gi == 0.0 && gb == 0.0) throw DataError("cannot calibrate noise without data");
    if (gi == 0.0) gi = gb;
    if (gb == 0.0) gb = gi;
    return {gi, gb};
}

NoiseModel calibrate_noise(const ForwardBlocks& blocks, const Vector& x_true, double percent) {
    const Vector yi = blocks.internal.rows() > 0 ? Vector(blocks.internal * x_true) : Vector();
    const Vector yb = blocks.boundary.rows() > 0 ? Vector(blocks.boundary * x_true) : Vector();
    return calibrate_noise(yi, yb, percent);
}

Vector add_noise(const Vector& clean, const Vector& deviations, std::mt19937_64& rng) {
    if (clean.size() != deviations.size()) throw DimensionError("noise size mismatch");
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector y = clean;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += deviations(i) * normal(rng);
    return y;
}

Vector simulate_measurements(const ForwardBlocks& blocks, const Vector& x_true, const NoiseModel& noise,
                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Vector clean = apply_forward(blocks, x_true);
    return add_noise(clean, noise.deviations(static_cast<int>(blocks.internal.rows()),
                                             static_cast<int>(blocks.boundary.rows())),
                     rng);
}

namespace {

void check_dims(const PriorModel& prior, const Matrix& f, const Vector& noise_var) {
    if (f.cols() != prior.size()) throw DimensionError("forward map column count must equal n");
    if (noise_var.size() != f.rows()) throw DimensionError("noise variance size must equal row count");
    if (f.rows() > 0 && !(noise_var.minCoeff() > 0.0)) throw DataError("noise variances must be positive");
}

void guard(const PriorModel& prior) {
    if (prior.size() > dense_guard) {
        throw GuardError("dense posterior path limited to n <= " + std::to_string(dense_guard));
    }
}

struct Woodbury {
    Matrix g;                 // Gamma_pr F^T
    Eigen::LLT<Matrix> s;     // F Gamma_pr F^T + Gamma_noise
};

Woodbury woodbury(const PriorModel& prior, const Matrix& f, const Vector& noise_var) {
    Woodbury w;
    w.g = prior.covariance_apply(f.transpose());
    Matrix s = f * w.g;
    s = 0.5 * (s + s.transpose()).eval();
    s.diagonal() += noise_var;
    w.s.compute(s);
    if (w.s.info() != Eigen::Success) throw DefinitenessError("data-space Woodbury matrix is not positive definite");
    return w;
}

}  // namespace

Matrix posterior_means(const PriorModel& prior, const Matrix& f, const Vector& noise_var, const Matrix& y) {
    check_dims(prior, f, noise_var);
    if (y.rows() != f.rows()) throw DimensionError("data size mismatch");
    Matrix x = prior.mean.replicate(1, y.cols());
    if (f.rows() == 0) return x;
    const Woodbury w = woodbury(prior, f, noise_var);
    const Matrix resid = y - (f * prior.mean).replicate(1, y.cols());
    x += w.g * w.s.solve(resid);
    return x;
}

Vector posterior_mean(const PriorModel& prior, const Matrix& f, const Vector& noise_var, const Vector& y,
                      PosteriorPath path) {
    check_dims(prior, f, noise_var);
    if (y.size() != f.rows()) throw DimensionError("data size mismatch");
    if (path == PosteriorPath::Woodbury) return posterior_means(prior, f, noise_var, Matrix(y)).col(0);
    guard(prior);
    const Vector w = noise_var.cwiseInverse();
    Matrix a = Matrix(prior.precision);
    a.noalias() += f.transpose() * w.asDiagonal() * f;
    const Vector rhs = prior.precision * prior.mean + f.transpose() * w.cwiseProduct(y);
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw DefinitenessError("posterior precision is not positive definite");
    return llt.solve(rhs);
}

Vector posterior_mean(const PriorModel& prior, const NoiseModel& noise, const ForwardBlocks& blocks, const Vector& y,
                      PosteriorPath path) {
    return posterior_mean(prior, blocks.stacked(), noise.variances(blocks), y, path);
}

Matrix posterior_covariance_dense(const PriorModel& prior, const Matrix& f, const Vector& noise_var) {
    check_dims(prior, f, noise_var);
    guard(prior);
    Matrix a = Matrix(prior.precision);
    if (f.rows() > 0) a.noalias() += f.transpose() * noise_var.cwiseInverse().asDiagonal() * f;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw DefinitenessError("posterior precision is not positive definite");
    Matrix c = llt.solve(Matrix::Identity(a.rows(), a.cols()));
    return 0.5 * (c + c.transpose());
}

Matrix posterior_covariance_woodbury(const PriorModel& prior, const Matrix& f, const Vector& noise_var) {
    check_dims(prior, f, noise_var);
    guard(prior);
    Matrix c = prior.covariance_apply(Matrix::Identity(prior.size(), prior.size()));
    if (f.rows() > 0) {
        const Woodbury w = woodbury(prior, f, noise_var);
        c.noalias() -= w.g * w.s.solve(w.g.transpose());
    }
    return 0.5 * (c + c.transpose());
}

double prior_trace(const PriorModel& prior, const SparseMatrix& a) { return trace_inverse_product(prior.factor, a); }

double posterior_trace_woodbury(const PriorModel& prior, const Matrix& f, const Vector& noise_var,
                                const SparseMatrix& a) {
    check_dims(prior, f, noise_var);
    const double c = prior_trace(prior, a);
    if (f.rows() == 0) return c;
    // With B = N^{-1/2} F L^{-1} = U S V^T, Woodbury in whitened coordinates gives
    // Gamma_post = Gamma_pr - L^{-1} V diag(s^2 / (1 + s^2)) V^T L^{-T}. Solving
    // with the data-space matrix F Gamma_pr F^T + N instead loses digits to its
    // conditioning, which the subtraction from the prior trace then amplifies.
    const Matrix bt = prior.factor.solve_Lt(Matrix(f.transpose())) * noise_var.cwiseSqrt().cwiseInverse().asDiagonal();
    const Eigen::BDCSVD<Matrix> svd(bt, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    const Matrix y = prior.factor.solve_L(Matrix(svd.matrixU()));
    const Matrix ay = a * y;
    double corr = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        const double s2 = s(i) * s(i);
        corr += s2 / (1.0 + s2) * y.col(i).dot(ay.col(i));
    }
    return c - corr;
}

Vector sample_prior(const PriorModel& prior, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(prior.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    return prior.mean + prior.factor.solve_L(z);
}

Vector sample_prior(const PriorModel& prior, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_prior(prior, rng);
}

double reconstruction_error(const Vector& estimate, const Vector& truth, const SparseMatrix& mass) {
    if (estimate.size() != truth.size() || truth.size() != mass.rows()) {
        throw DimensionError("reconstruction_error: size mismatch");
    }
    const double denom = truth.dot(mass * truth);
    if (!(denom > 0.0)) throw DataError("reconstruction_error: true source has zero norm");
    const Vector d = estimate - truth;
    return std::sqrt(std::max(0.0, d.dot(mass * d)) / denom);
}

}  // namespace ironloss
