#include <doctest.h>

#include <cmath>

#include "common.hpp"

using namespace ironloss;
using testutil::rel_diff;

namespace {

SparseMatrix scalar(double v) {
    SparseMatrix a(1, 1);
    a.insert(0, 0) = v;
    return a;
}

struct Square {
    Mesh mesh;
    SparseMatrix mass, k;
    explicit Square(int r) : mesh(build_unit_square_mesh(r)) {
        mass = assemble_mass(mesh, ScalarField::uniform(1.0));
        k = assemble_stiffness(mesh, MaterialModel{});
    }
    Vector gaussian_load() const {
        const Vector f = evaluate_modes(mesh, {{40.0, 25.0, 0.4, 0.6}});
        return mass * f;
    }
};

}  // namespace

TEST_CASE("zero load stays at zero") {
    const Square s(6);
    const MidpointPropagator p(s.mass, s.k, {0.6, 5, 4});
    CHECK(p.propagate(Vector(Vector::Zero(s.mesh.num_nodes()))).norm() == 0.0);
}

TEST_CASE("scalar surrogate follows the midpoint recursion exactly") {
    const TimeGrid g{2.0, 4, 8};
    const MidpointPropagator p(scalar(1.0), scalar(1.0), g);
    const Matrix u = p.propagate(Vector(Vector::Ones(1)));
    const double dt = g.dt();
    const double r = (1.0 - 0.5 * dt) / (1.0 + 0.5 * dt);
    for (int j = 1; j <= g.observations; ++j) {
        const double recursion = 1.0 - std::pow(r, j * g.substeps);
        CHECK(u(0, j - 1) == doctest::Approx(recursion).epsilon(1e-14));
        const double exact = 1.0 - std::exp(-g.time(j));
        CHECK(std::abs(u(0, j - 1) - exact) < dt * dt);
    }
}

TEST_CASE("spectral oracle limits") {
    const Square s(6);
    const SpectralOracle o(s.mass, s.k);
    const Vector load = s.gaussian_load();
    CHECK(o.solution(load, 0.0).norm() == 0.0);
    const Vector steady = CholeskyFactor(s.k).solve(load);
    CHECK(rel_diff(o.steady_state(load), steady) < 1e-10);
    CHECK(rel_diff(o.solution(load, 200.0), steady) < 1e-10);
    CHECK(thermal_time_constant(s.mass, s.k) == doctest::Approx(1.0 / o.eigenvalues().minCoeff()).epsilon(1e-8));
}

TEST_CASE("spectral oracle refuses large problems") {
    const Mesh m = build_unit_square_mesh(45);
    REQUIRE(m.num_nodes() > SpectralOracle::max_size);
    const SparseMatrix mass = assemble_mass(m, ScalarField::uniform(1.0));
    CHECK_THROWS_AS(SpectralOracle(mass, mass), GuardError);
}

TEST_CASE("midpoint converges at second order against the spectral reference") {
    const Square s(10);
    const Vector load = s.gaussian_load();
    const Vector ref = spectral_reference(s.mass, s.k, load, 0.6);
    std::vector<double> err;
    for (int steps : {300, 600, 1200}) {
        const MidpointPropagator p(s.mass, s.k, {0.6, 1, steps});
        err.push_back((p.propagate(load).col(0) - ref).norm() / ref.norm());
    }
    for (std::size_t i = 0; i + 1 < err.size(); ++i) {
        const double ratio = err[i] / err[i + 1];
        CHECK(ratio > 3.4);
        CHECK(ratio < 4.6);
    }
}

TEST_CASE("nonnegative source heats monotonically and stays below the steady state") {
    const Square s(8);
    const Vector load = s.gaussian_load();
    const Vector steady = CholeskyFactor(s.k).solve(load);
    const Matrix u = MidpointPropagator(s.mass, s.k, {3.0, 30, 2}).propagate(load);
    const double scale = steady.cwiseAbs().maxCoeff();
    for (int j = 0; j < u.cols(); ++j) {
        CHECK(u.col(j).maxCoeff() <= steady.maxCoeff() * (1.0 + 1e-6));
        if (j > 0) CHECK((u.col(j) - u.col(j - 1)).minCoeff() >= -1e-10 * scale);
    }
}

TEST_CASE("forward rows") {
    const Square s(8);
    const TimeGrid g{0.6, 3, 4};
    const MidpointPropagator p(s.mass, s.k, g);
    ExperimentConfig cfg = default_config("exp1");
    const SensorDesign d = make_design(cfg, {{0.31, 0.42}, {0.7, 0.66}});
    const MeasurementRows br = build_internal_sensor_rows(s.mesh, d);
    const MeasurementRows bb = build_boundary_pixel_rows(s.mesh, 8);
    const ForwardBlocks fb = assemble_forward_blocks(s.mass, p, br.rows, bb.rows);
    CHECK(fb.internal.rows() == g.observations * d.count());
    CHECK(fb.boundary.rows() == g.observations * 8);

    SUBCASE("match direct propagation of the source") {
        const Vector x = evaluate_modes(s.mesh, {{30.0, 60.0, 0.5, 0.3}});
        const Matrix u = p.propagate(Vector(s.mass * x));
        Vector y(fb.rows());
        for (int j = 0; j < g.observations; ++j) {
            y.segment(j * d.count(), d.count()) = br.rows * u.col(j);
        }
        for (int j = 0; j < g.observations; ++j) {
            y.segment(fb.internal.rows() + j * 8, 8) = bb.rows * u.col(j);
        }
        CHECK(rel_diff(apply_forward(fb, x), y) < 1e-12);
    }
    SUBCASE("linearity") {
        const Vector a = evaluate_modes(s.mesh, {{10.0, 10.0, 0.2, 0.2}});
        const Vector b = evaluate_modes(s.mesh, {{50.0, 5.0, 0.8, 0.4}});
        CHECK(rel_diff(apply_forward(fb, 2.0 * a - 3.0 * b), 2.0 * apply_forward(fb, a) - 3.0 * apply_forward(fb, b)) <
              1e-13);
    }
    SUBCASE("adjoint pairing") {
        const Vector x = evaluate_modes(s.mesh, {{20.0, 20.0, 0.6, 0.5}});
        Vector yv = Vector::LinSpaced(fb.rows(), -1.0, 2.0);
        const Matrix f = fb.stacked();
        CHECK(apply_forward(fb, x).dot(yv) == doctest::Approx(x.dot(f.transpose() * yv)).epsilon(1e-12));
    }
    SUBCASE("late rows approach the steady response") {
        // Midpoint damps stiff modes only by |(1 - x)/(1 + x)|, x = dt lambda / 2,
        // so the step must be small enough for them to die out as well.
        const TimeGrid lg{50.0, 1, 4000};
        const MidpointPropagator lp(s.mass, s.k, lg);
        const Matrix f = assemble_forward_rows(s.mass, lp, br.rows);
        const Matrix steady = br.rows * CholeskyFactor(s.k).solve(to_dense(s.mass));
        CHECK(rel_diff(f, steady) < 1e-8);
    }
}

TEST_CASE("time grid validation") {
    CHECK_THROWS_AS((TimeGrid{0.0, 1, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((TimeGrid{1.0, 0, 1}.validate()), ConfigError);
    CHECK_THROWS_AS((TimeGrid{1.0, 1, 0}.validate()), ConfigError);
    const TimeGrid g{0.6, 20, 10};
    CHECK(g.time(20) == doctest::Approx(0.6));
    CHECK(g.dt() == doctest::Approx(0.003));
}
