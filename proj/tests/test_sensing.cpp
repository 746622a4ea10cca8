#include <doctest.h>

#include <numbers>
#include <random>

#include "common.hpp"

using namespace ironloss;
using testutil::rel_diff;

namespace {

Vector nodal(const Mesh& m, auto f) {
    Vector v(m.num_nodes());
    for (int i = 0; i < m.num_nodes(); ++i) v(i) = f(m.node(i));
    return v;
}

SensorDesign design_at(std::vector<Point> p, double r = 0.05, int q = 7) {
    SensorDesign d;
    d.positions = std::move(p);
    d.radius = r;
    d.stencil_points = q;
    return d;
}

}  // namespace

TEST_CASE("stencil geometry") {
    const auto pts = stencil({0.5, 0.5}, 0.1, 7);
    REQUIRE(pts.size() == 7);
    CHECK(pts[0] == Point(0.5, 0.5));
    for (std::size_t k = 1; k < pts.size(); ++k) CHECK((pts[k] - pts[0]).norm() == doctest::Approx(0.1));
    CHECK(stencil({0.2, 0.3}, 0.1, 1).size() == 1);
}

TEST_CASE("internal rows are nonnegative averages") {
    const Mesh m = build_unit_square_mesh(16);
    const SensorDesign d = design_at({{0.3, 0.3}, {0.55, 0.71}, {0.9, 0.1}});
    const MeasurementRows r = build_internal_sensor_rows(m, d);
    CHECK(r.size() == 3);
    const Vector sums = r.rows * Vector::Ones(m.num_nodes());
    for (int i = 0; i < 3; ++i) CHECK(sums(i) == doctest::Approx(1.0).epsilon(1e-14));
    for (int k = 0; k < r.rows.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(r.rows, k); it; ++it) CHECK(it.value() >= 0.0);
}

TEST_CASE("readings of constant, linear and quadratic fields") {
    const Mesh m = build_unit_square_mesh(32);
    const Point c(0.41, 0.57);
    const double r = 0.05;
    const int q = 7;
    const SensorDesign d = design_at({c}, r, q);
    const SparseMatrix b = build_internal_sensor_rows(m, d).rows;
    CHECK((b * nodal(m, [](const Point&) { return 3.25; }))(0) == doctest::Approx(3.25).epsilon(1e-14));
    const auto lin = [](const Point& p) { return 2.0 * p.x() - 0.5 * p.y() + 1.0; };
    CHECK((b * nodal(m, lin))(0) == doctest::Approx(lin(c)).epsilon(1e-13));

    // Stencil average of x^2 is cx^2 + r^2 (q-1)/(2q); the exact disk average
    // would be cx^2 + r^2/4. The reading sees the P1 interpolant of x^2, off by
    // at most max (x - a)(b - x) = h^2/4 per point.
    const double h = 1.0 / 32.0;
    const double stencil_avg = c.x() * c.x() + r * r * (q - 1) / (2.0 * q);
    const double reading = (b * nodal(m, [](const Point& p) { return p.x() * p.x(); }))(0);
    CHECK(std::abs(reading - stencil_avg) <= h * h / 4.0 + 1e-14);
    CHECK(std::abs(stencil_avg - (c.x() * c.x() + r * r / 4.0)) == doctest::Approx(r * r * (1.0 / 4.0 - 1.0 / 14.0)));
}

TEST_CASE("translation equivariance on linear fields") {
    const Mesh m = build_unit_square_mesh(20);
    const Point p(0.33, 0.4), shift(0.21, -0.13);
    const auto u = [](const Point& x) { return 1.5 * x.x() + 0.7 * x.y() - 0.2; };
    const auto u_shifted = [&](const Point& x) { return u(x - shift); };
    const double a = (build_internal_sensor_rows(m, design_at({p})).rows * nodal(m, u))(0);
    const double b = (build_internal_sensor_rows(m, design_at({p + shift})).rows * nodal(m, u_shifted))(0);
    CHECK(a == doctest::Approx(b).epsilon(1e-13));
}

TEST_CASE("stencil leaving the domain is infeasible") {
    const Mesh m = build_unit_square_mesh(8);
    CHECK_THROWS_AS(build_internal_sensor_rows(m, design_at({{0.02, 0.5}})), DesignInfeasibleError);
}

TEST_CASE("row derivatives") {
    const Mesh m = build_unit_square_mesh(24);
    SUBCASE("constant field has zero derivative; rows sum to zero") {
        const SensorDesign d = design_at({{0.37, 0.61}});
        for (int a = 0; a < 2; ++a) {
            const SparseMatrix dr = internal_row_derivative(m, d, 0, a);
            CHECK(std::abs((dr * Vector::Ones(m.num_nodes()))(0)) < 1e-10);
        }
    }
    SUBCASE("linear field gives its gradient") {
        const SensorDesign d = design_at({{0.52, 0.29}});
        const Vector u = nodal(m, [](const Point& p) { return 2.0 * p.x() - 3.0 * p.y(); });
        CHECK((internal_row_derivative(m, d, 0, 0) * u)(0) == doctest::Approx(2.0).epsilon(1e-10));
        CHECK((internal_row_derivative(m, d, 0, 1) * u)(0) == doctest::Approx(-3.0).epsilon(1e-10));
    }
    SUBCASE("stacked derivative rows agree with single rows") {
        const SensorDesign d = design_at({{0.3, 0.3}, {0.7, 0.4}});
        for (int a = 0; a < 2; ++a) {
            const Matrix all = to_dense(internal_derivative_rows(m, d, a));
            for (int i = 0; i < 2; ++i)
                CHECK(rel_diff(all.row(i), to_dense(internal_row_derivative(m, d, i, a))) < 1e-15);
        }
    }
    SUBCASE("finite differences of a smooth field") {
        std::mt19937_64 rng(17);
        const AdmissibleRegion region = AdmissibleRegion::for_disks({0, 1, 0, 1}, {}, 0.05);
        const double h = 1e-6;
        const Vector u = nodal(m, [](const Point& p) { return std::sin(3.0 * p.x()) * std::cos(2.0 * p.y()); });
        for (int trial = 0; trial < 5; ++trial) {
            const SensorDesign d = testutil::random_clear_design(m, region, design_at({}), 1, rng, h);
            for (int a = 0; a < 2; ++a) {
                SensorDesign dp = d, dm = d;
                dp.positions[0](a) += h;
                dm.positions[0](a) -= h;
                const double fd = ((build_internal_sensor_rows(m, dp).rows * u)(0) -
                                   (build_internal_sensor_rows(m, dm).rows * u)(0)) / (2.0 * h);
                const double an = (internal_row_derivative(m, d, 0, a) * u)(0);
                CHECK(an == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("boundary pixels on the unit square") {
    const Mesh m = build_unit_square_mesh(19);
    const MeasurementRows r = build_boundary_pixel_rows(m, 76);
    REQUIRE(r.size() == 76);
    CHECK(r.kind == RowKind::Boundary);
    bool closed = false;
    const auto chain = measurement_chain(m, &closed);
    CHECK(closed);
    CHECK(m.node(chain.front()) == Point(0.0, 0.0));

    const Vector c = (r.rows * Vector::Constant(m.num_nodes(), 2.5));
    for (int i = 0; i < 76; ++i) CHECK(c(i) == doctest::Approx(2.5).epsilon(1e-14));

    // Corners fall on pixel ends (76 = 4 * 19), so the average of a linear
    // field over a pixel is its value at the pixel's midpoint.
    const auto lin = [](const Point& p) { return p.x() + 2.0 * p.y(); };
    const Vector y = r.rows * nodal(m, lin);
    const double len = 4.0 / 76.0;
    for (int i = 0; i < 76; ++i) {
        const double s = (i + 0.5) * len;  // counter-clockwise arc length from the origin
        Point mid;
        if (s < 1.0) mid = {s, 0.0};
        else if (s < 2.0) mid = {1.0, s - 1.0};
        else if (s < 3.0) mid = {3.0 - s, 1.0};
        else mid = {0.0, 4.0 - s};
        CHECK(y(i) == doctest::Approx(lin(mid)).epsilon(1e-12));
    }
}

TEST_CASE("boundary pixels on the transformer outer edge") {
    const DomainSpec spec = default_transformer_spec();
    const Mesh m = build_mesh(spec);
    const MeasurementRows r = build_boundary_pixel_rows(m, 60);
    REQUIRE(r.size() == 60);
    bool closed = true;
    measurement_chain(m, &closed);
    CHECK_FALSE(closed);
    const Vector y = r.rows * nodal(m, [](const Point& p) { return p.y(); });
    const double len = spec.extents.height() / 60.0;
    int max_support = 0;
    for (int i = 0; i < 60; ++i) {
        CHECK(y(i) == doctest::Approx(spec.extents.y0 + (i + 0.5) * len).epsilon(1e-12));
        max_support = std::max<int>(max_support, static_cast<int>(to_dense(r.rows).row(i).cwiseAbs().cast<bool>().count()));
    }
    CHECK(max_support <= 4);
}

TEST_CASE("boundary-form identity for degree <= 1 fields") {
    // d/dp of the stencil reading equals the disk average of the gradient,
    // which for linear v equals (1/|S|) times the boundary flux integral.
    const Mesh m = build_unit_square_mesh(16);
    const double r = 0.05;
    const Point c(0.43, 0.38);
    const SensorDesign d = design_at({c}, r);
    for (const auto& [gx, gy, c0] : std::vector<std::tuple<double, double, double>>{{0, 0, 1.0}, {1.3, -0.4, 0.2}}) {
        const auto v = [&](const Point& p) { return gx * p.x() + gy * p.y() + c0; };
        const Vector u = nodal(m, v);
        for (int a = 0; a < 2; ++a) {
            const int n = 64;
            double flux = 0.0;
            for (int k = 0; k < n; ++k) {
                const double t = 2.0 * std::numbers::pi * k / n;
                const Point nu(std::cos(t), std::sin(t));
                flux += nu(a) * v(c + r * nu) * (2.0 * std::numbers::pi * r / n);
            }
            const double boundary_form = flux / (std::numbers::pi * r * r);
            const double volume_form = (internal_row_derivative(m, d, 0, a) * u)(0);
            CHECK(std::abs(volume_form - boundary_form) < 1e-10);
        }
    }
}

TEST_CASE("admissible region and projection") {
    const AdmissibleRegion reg = AdmissibleRegion::for_disks({0, 1, 0, 1}, {{0.4, 0.6, 0.4, 0.6}}, 0.05);
    CHECK(reg.contains({0.2, 0.2}));
    CHECK_FALSE(reg.contains({0.5, 0.5}));
    CHECK_FALSE(reg.contains({0.01, 0.5}));
    const Point p = reg.project({0.5, 0.47});
    CHECK(reg.contains(p));
    CHECK(p.y() == doctest::Approx(0.35 - 0.05e-3));
    CHECK(reg.project({-3.0, 2.0}) == Point(reg.outer.x0, reg.outer.y1));
    CHECK_THROWS_AS(AdmissibleRegion::for_disks({0, 0.05, 0, 1}, {}, 0.05), DesignInfeasibleError);
}

TEST_CASE("overlap penalty") {
    SensorDesign d = design_at({{0.3, 0.3}, {0.8, 0.8}}, 0.05);
    CHECK(overlap_penalty(d, 2.0).value == 0.0);
    d.positions[1] = d.positions[0];
    CHECK(overlap_penalty(d, 2.0).value == doctest::Approx(2.0 * 0.01));

    d = design_at({{0.3, 0.3}, {0.36, 0.33}, {0.31, 0.35}}, 0.05);
    const PenaltyValue pv = overlap_penalty(d, 3.0);
    const Vector x = d.flatten();
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = 1e-7;
        Vector xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        const double fd =
            (overlap_penalty(d.with_flat(xp), 3.0).value - overlap_penalty(d.with_flat(xm), 3.0).value) / (2 * h);
        CHECK(pv.gradient(k) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("design JSON round trip") {
    const SensorDesign d = design_at({{0.125, 0.3}, {1.0 / 3.0, 0.7}}, 0.04, 5);
    const SensorDesign r = design_from_json(design_to_json(d));
    CHECK(r.positions == d.positions);
    CHECK(r.radius == d.radius);
    CHECK(r.stencil_points == d.stencil_points);
}
