#include "ironloss/reduction.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <random>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace ironloss {

LinearOperator dense_operator(Matrix a) {
    auto m = std::make_shared<const Matrix>(std::move(a));
    LinearOperator op;
    op.rows = m->rows();
    op.cols = m->cols();
    op.apply = [m](const Matrix& x) { return Matrix(*m * x); };
    op.apply_transpose = [m](const Matrix& y) { return Matrix(m->transpose() * y); };
    return op;
}

LinearOperator prior_condition(Matrix f, const CholeskyFactor& l) {
    if (f.cols() != l.size()) throw DimensionError("prior_condition: F columns must match the factor size");
    auto m = std::make_shared<const Matrix>(std::move(f));
    LinearOperator op;
    op.rows = m->rows();
    op.cols = m->cols();
    op.apply = [m, l](const Matrix& x) { return Matrix(*m * l.solve_L(x)); };
    op.apply_transpose = [m, l](const Matrix& y) { return l.solve_Lt(Matrix(m->transpose() * y)); };
    return op;
}

namespace {

/// Orthonormal basis of the column span; false when numerically rank deficient.
bool orthonormalize(Matrix& a) {
    if (a.cols() == 0) return true;
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(1e-12);
    const Eigen::Index rank = qr.rank();
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), rank);
    const bool full = rank == a.cols();
    a = std::move(q);
    return full;
}

}  // namespace

RangeResult randomized_range(const LinearOperator& a, int columns, int power_iters, std::uint64_t seed) {
    if (columns < 1) throw DimensionError("randomized_range: need at least one column");
    if (power_iters < 0) throw ConfigError("randomized_range: power iterations must be >= 0");
    const Eigen::Index l = std::min<Eigen::Index>(columns, std::min(a.rows, a.cols));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix q(a.rows, l);
    for (Eigen::Index j = 0; j < l; ++j)
        for (Eigen::Index i = 0; i < a.rows; ++i) q(i, j) = normal(rng);
    RangeResult out;
    out.rank_deficient = l < columns;
    orthonormalize(q);
    for (int it = 0; it <= power_iters; ++it) {
        Matrix w = a.apply_transpose(q);
        if (!orthonormalize(w)) out.rank_deficient = true;
        q = a.apply(w);
        if (!orthonormalize(q)) out.rank_deficient = true;
    }
    out.q = std::move(q);
    return out;
}

ReducedBoundaryOp reduce_boundary_operator(const LinearOperator& fpr, int rank, int power_iters, std::uint64_t seed,
                                           int oversample) {
    if (rank < 0) throw DimensionError("reduce_boundary_operator: rank must be >= 0");
    if (oversample < 0) throw ConfigError("oversampling must be >= 0");
    ReducedBoundaryOp op;
    op.power_iters = power_iters;
    op.oversample = oversample;
    op.seed = seed;
    if (rank == 0) {
        op.u = Matrix(fpr.rows, 0);
        op.v = Matrix(fpr.cols, 0);
        return op;
    }
    const RangeResult range = randomized_range(fpr, rank + oversample, power_iters, seed);
    op.rank_deficient = range.rank_deficient;
    const Matrix bt = fpr.apply_transpose(range.q);  // (Q^T A)^T, n x l
    Eigen::BDCSVD<Matrix> svd(bt, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    Eigen::Index keep = std::min<Eigen::Index>(rank, s.size());
    const double floor = s.size() > 0 ? s(0) * 1e-15 * static_cast<double>(bt.cols()) : 0.0;
    while (keep > 0 && !(s(keep - 1) > floor)) --keep;
    if (keep < rank) op.rank_deficient = true;
    // Q^T A = (V_b S U_b^T) with bt = U_b S V_b^T, so A ~ (Q V_b) S U_b^T.
    op.sigma = s.head(keep);
    op.v = svd.matrixU().leftCols(keep);
    op.u = range.q * svd.matrixV().leftCols(keep);
    return op;
}

int numerical_rank(const Vector& sigma, double rel) {
    if (sigma.size() == 0) return 0;
    const double top = sigma.maxCoeff();
    return static_cast<int>((sigma.array() > rel * top).count());
}

Vector reduce_data(const ReducedBoundaryOp& op, const Vector& y_bdry) { return reduce_data(op, Matrix(y_bdry)).col(0); }

Matrix reduce_data(const ReducedBoundaryOp& op, const Matrix& y_bdry) {
    if (y_bdry.rows() != op.rows()) throw DimensionError("reduce_data: boundary data size mismatch");
    return op.u.transpose() * y_bdry;
}

ReducedForward assemble_reduced_forward(const PriorModel& prior, const Matrix& f_int, const ReducedBoundaryOp* reduced,
                                        double gamma_int, double gamma_bdry) {
    const int n = prior.size();
    if (f_int.rows() > 0 && f_int.cols() != n) throw DimensionError("internal block column count must equal n");
    if (reduced && reduced->rank() > 0 && reduced->cols() != n) {
        throw DimensionError("reduced boundary operator column count must equal n");
    }
    ReducedForward out;
    out.internal_rows = static_cast<int>(f_int.rows());
    out.rank = reduced ? reduced->rank() : 0;
    const int k = out.rows();
    if ((out.internal_rows > 0 && !(gamma_int > 0.0)) || (out.rank > 0 && !(gamma_bdry > 0.0))) {
        throw DataError("noise standard deviations must be positive");
    }
    out.ftilde.resize(k, n);
    out.g.resize(n, k);
    out.noise_var.resize(k);
    if (out.internal_rows > 0) {
        const Matrix ft = prior.factor.solve_Lt(Matrix(f_int.transpose()));  // L^{-T} F_int^T
        out.ftilde.topRows(out.internal_rows) = ft.transpose();
        out.g.leftCols(out.internal_rows) = prior.factor.solve_L(ft);
        out.noise_var.head(out.internal_rows).setConstant(gamma_int * gamma_int);
    }
    if (out.rank > 0) {
        const Matrix vs = reduced->v * reduced->sigma.asDiagonal();
        out.ftilde.bottomRows(out.rank) = vs.transpose();
        out.g.rightCols(out.rank) = prior.factor.solve_L(vs);
        out.noise_var.tail(out.rank).setConstant(gamma_bdry * gamma_bdry);
    }
    return out;
}

ReducedPosterior::ReducedPosterior(const PriorModel& prior, ReducedForward fwd) : prior_(&prior), fwd_(std::move(fwd)) {
    Matrix h = fwd_.ftilde * fwd_.ftilde.transpose();
    h = 0.5 * (h + h.transpose()).eval();
    h.diagonal() += fwd_.noise_var;
    h_.compute(h);
    if (fwd_.rows() > 0 && h_.info() != Eigen::Success) {
        throw DefinitenessError("reduced data-space matrix H is not positive definite");
    }
}

Matrix ReducedPosterior::mean(const Matrix& y_int, const Matrix& y_bdry_reduced) const {
    const Eigen::Index cols = std::max(y_int.cols(), y_bdry_reduced.cols());
    if (y_int.rows() != fwd_.internal_rows || y_bdry_reduced.rows() != fwd_.rank) {
        throw DimensionError("reduced posterior: data size mismatch");
    }
    Matrix x = prior_->mean.replicate(1, cols);
    if (fwd_.rows() == 0) return x;
    Matrix y(fwd_.rows(), cols);
    if (fwd_.internal_rows > 0) y.topRows(fwd_.internal_rows) = y_int;
    if (fwd_.rank > 0) y.bottomRows(fwd_.rank) = y_bdry_reduced;
    if (prior_->mean.squaredNorm() > 0.0) {
        const Vector pred = fwd_.ftilde * prior_->factor.apply_L(prior_->mean);
        y.colwise() -= pred;
    }
    x += fwd_.g * h_.solve(y);
    return x;
}

Vector ReducedPosterior::mean(const Vector& y_int, const Vector& y_bdry_reduced) const {
    return mean(Matrix(y_int), Matrix(y_bdry_reduced)).col(0);
}

Matrix ReducedPosterior::covariance_apply(const Matrix& a) const {
    Matrix c = prior_->covariance_apply(a);
    if (fwd_.rows() > 0) c -= fwd_.g * h_.solve(Matrix(fwd_.g.transpose() * a));
    return c;
}

double ReducedPosterior::trace_correction(const SparseMatrix& a) const {
    if (fwd_.rows() == 0) return 0.0;
    const Matrix e = fwd_.g.transpose() * (a * fwd_.g);
    return h_.solve(e).trace();
}

double ReducedPosterior::trace_precision() const {
    const double n = static_cast<double>(fwd_.g.rows());
    if (fwd_.rows() == 0) return n;
    const Matrix e = fwd_.ftilde * fwd_.ftilde.transpose();
    return n - h_.solve(e).trace();
}

namespace {

constexpr char magic[4] = {'H', 'R', 'B', 'O'};
constexpr std::uint32_t cache_version = 1;

template <class T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("reduced-operator cache is truncated");
    return v;
}

void put_matrix(std::ofstream& out, const Matrix& m) {
    put<std::int64_t>(out, m.rows());
    put<std::int64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Matrix get_matrix(std::ifstream& in) {
    const auto r = get<std::int64_t>(in);
    const auto c = get<std::int64_t>(in);
    if (r < 0 || c < 0 || r > (1 << 26) || c > (1 << 26)) throw IoError("reduced-operator cache has a bad shape");
    Matrix m(r, c);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw IoError("reduced-operator cache is truncated");
    return m;
}

}  // namespace

void write_reduced_op(const std::string& path, const ReducedBoundaryOp& op, std::uint64_t key) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write reduced-operator cache " + path);
    out.write(magic, 4);
    put(out, cache_version);
    put(out, key);
    put<std::int32_t>(out, op.power_iters);
    put<std::int32_t>(out, op.oversample);
    put(out, op.seed);
    put<std::uint8_t>(out, op.rank_deficient ? 1 : 0);
    put_matrix(out, op.u);
    put_matrix(out, Matrix(op.sigma));
    put_matrix(out, op.v);
    if (!out) throw IoError("failed writing reduced-operator cache " + path);
}

std::optional<ReducedBoundaryOp> read_reduced_op(const std::string& path, std::uint64_t key) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char m[4];
    in.read(m, 4);
    if (!in || std::string(m, 4) != std::string(magic, 4)) throw IoError("not a reduced-operator cache: " + path);
    if (get<std::uint32_t>(in) != cache_version) return std::nullopt;
    if (get<std::uint64_t>(in) != key) return std::nullopt;
    ReducedBoundaryOp op;
    op.power_iters = get<std::int32_t>(in);
    op.oversample = get<std::int32_t>(in);
    op.seed = get<std::uint64_t>(in);
    op.rank_deficient = get<std::uint8_t>(in) != 0;
    op.u = get_matrix(in);
    op.sigma = get_matrix(in).col(0);
    op.v = get_matrix(in);
    if (op.u.cols() != op.sigma.size() || op.v.cols() != op.sigma.size()) {
        throw IoError("reduced-operator cache is inconsistent");
    }
    return op;
}

}  // namespace ironloss
