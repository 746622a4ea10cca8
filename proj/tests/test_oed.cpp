#include <doctest.h>

#include <random>

#include "common.hpp"

using namespace ironloss;
using testutil::rel_diff;

namespace {

struct Fixture {
    ExperimentConfig cfg = testutil::small_exp1(12, 4);
    ProblemSetup s = build_setup(cfg, true);
    std::shared_ptr<const ReducedBoundaryOp> red =
        std::make_shared<ReducedBoundaryOp>(reduce_boundary_operator(prior_condition(s.f_bdry, s.prior->factor), 15, 2, 3));
    double gi = 2e-3, gb = 5e-3;

    DesignProblem problem(SeminormMode mode, bool boundary, bool drop_constant = false, double overlap = 0.0) const {
        DesignObjectiveConfig oc;
        oc.mode = mode;
        oc.drop_constant = drop_constant;
        oc.overlap_weight = overlap;
        oc.region = s.region;
        return DesignProblem(make_context(s, boundary ? red : nullptr, gi, gb), oc);
    }

    // Dense tr(Gamma_post A^T A) with the boundary rows represented by the
    // truncated factors, i.e. F_bdry ~ U Sigma V^T L.
    double dense_phi(const DesignProblem& p, const SensorDesign& d, bool boundary) const {
        const Matrix fi = p.internal_forward(d);
        const Matrix l = to_dense(s.prior->factor.factor_L());
        Matrix fb = boundary ? Matrix(red->sigma.asDiagonal() * red->v.transpose() * l) : Matrix(0, fi.cols());
        Matrix f(fi.rows() + fb.rows(), fi.cols());
        f << fi, fb;
        Vector var(f.rows());
        var << Vector::Constant(fi.rows(), gi * gi), Vector::Constant(fb.rows(), gb * gb);
        const Matrix c = posterior_covariance_dense(*s.prior, f, var);
        const Matrix a = p.config().mode == SeminormMode::M ? to_dense(s.mass) : to_dense(s.prior->precision);
        return (c * a).trace();
    }
};

Vector fd_gradient(const DesignProblem& p, const SensorDesign& d, double h) {
    const Vector x = d.flatten();
    Vector g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vector xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        g(k) = (phi_A(p, d.with_flat(xp)) - phi_A(p, d.with_flat(xm))) / (2.0 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("empty design gives the prior value") {
    const Fixture f;
    const DesignProblem pm = f.problem(SeminormMode::M, false);
    SensorDesign empty = make_design(f.cfg, {});
    CHECK(phi_A(pm, empty) == doctest::Approx(prior_trace(*f.s.prior, f.s.mass)).epsilon(1e-12));
    CHECK(phi_A(f.problem(SeminormMode::L, false), empty) == doctest::Approx(f.s.prior->size()));
    CHECK(phi_A(f.problem(SeminormMode::M, false, true), empty) == 0.0);
}

TEST_CASE("low-rank value matches the dense posterior") {
    const Fixture f;
    const SensorDesign d = make_design(f.cfg, {{0.27, 0.31}, {0.71, 0.36}, {0.52, 0.74}});
    for (SeminormMode mode : {SeminormMode::M, SeminormMode::L})
        for (bool boundary : {false, true}) {
            const DesignProblem p = f.problem(mode, boundary);
            CHECK(phi_A(p, d) == doctest::Approx(f.dense_phi(p, d, boundary)).epsilon(1e-8));
            const DesignProblem dropped = f.problem(mode, boundary, true);
            CHECK(phi_A(dropped, d) == doctest::Approx(phi_A(p, d) - p.constant()).epsilon(1e-8));
        }
}

TEST_CASE("adding a sensor lowers the value") {
    const Fixture f;
    const DesignProblem p = f.problem(SeminormMode::M, true);
    const SensorDesign one = make_design(f.cfg, {{0.3, 0.3}});
    const SensorDesign two = make_design(f.cfg, {{0.3, 0.3}, {0.7, 0.6}});
    CHECK(phi_A(p, two) < phi_A(p, one));
    CHECK(phi_A(p, one) < phi_A(p, make_design(f.cfg, {})));
}

TEST_CASE("sensor order does not matter") {
    const Fixture f;
    const DesignProblem p = f.problem(SeminormMode::M, true);
    const SensorDesign a = make_design(f.cfg, {{0.23, 0.41}, {0.66, 0.58}, {0.4, 0.8}});
    const SensorDesign b = make_design(f.cfg, {a.positions[2], a.positions[0], a.positions[1]});
    CHECK(phi_A(p, a) == doctest::Approx(phi_A(p, b)).epsilon(1e-12));
    const Vector ga = grad_phi_A(p, a), gb = grad_phi_A(p, b);
    CHECK(std::abs(ga(0) - gb(2)) <= 1e-10 * ga.norm());
    CHECK(std::abs(ga(5) - gb(1)) <= 1e-10 * ga.norm());
}

TEST_CASE("half-turn rotation maps value and gradient consistently") {
    // The structured mesh, the prior, the forward model and a stencil with an
    // even number of ring points are all invariant under (x, y) -> (1 - x, 1 - y).
    const Fixture f;
    REQUIRE((f.cfg.stencil_points - 1) % 2 == 0);
    const DesignProblem p = f.problem(SeminormMode::M, false);
    const SensorDesign a = make_design(f.cfg, {{0.23, 0.41}, {0.66, 0.58}});
    SensorDesign b = a;
    for (auto& q : b.positions) q = Point(1.0 - q.x(), 1.0 - q.y());
    CHECK(phi_A(p, a) == doctest::Approx(phi_A(p, b)).epsilon(1e-10));
    const Vector ga = grad_phi_A(p, a), gb = grad_phi_A(p, b);
    CHECK((ga + gb).norm() <= 1e-8 * ga.norm());
}

TEST_CASE("gradient agrees with central differences away from element edges") {
    const Fixture f;
    std::mt19937_64 rng(8);
    const double h = 1e-5 * f.s.mesh->diameter();
    for (SeminormMode mode : {SeminormMode::M, SeminormMode::L}) {
        const DesignProblem p = f.problem(mode, true, true, 0.0);
        const SensorDesign d = testutil::random_clear_design(*f.s.mesh, f.s.region, make_design(f.cfg, {}), 3, rng, h);
        const Vector g = grad_phi_A(p, d);
        const Vector fd = fd_gradient(p, d, h);
        for (Eigen::Index k = 0; k < g.size(); ++k) CHECK(g(k) == doctest::Approx(fd(k)).epsilon(1e-4));
    }
}

TEST_CASE("overlap penalty is added to value and gradient") {
    const Fixture f;
    const SensorDesign d = make_design(f.cfg, {{0.3, 0.3}, {0.36, 0.33}});
    const DesignProblem plain = f.problem(SeminormMode::M, false);
    const DesignProblem pen = f.problem(SeminormMode::M, false, false, 5.0);
    const PenaltyValue pv = overlap_penalty(d, 5.0);
    REQUIRE(pv.value > 0.0);
    CHECK(phi_A(pen, d) == doctest::Approx(phi_A(plain, d) + pv.value).epsilon(1e-12));
    CHECK(rel_diff(grad_phi_A(pen, d), grad_phi_A(plain, d) + pv.gradient) < 1e-12);
}

TEST_CASE("infeasible designs") {
    const Fixture f;
    const DesignProblem p = f.problem(SeminormMode::M, false);
    const SensorDesign d = make_design(f.cfg, {{0.01, 0.5}});
    const PhiEvaluation e = p.evaluate(d, true);
    CHECK_FALSE(e.feasible);
    CHECK(e.value == p.config().infeasible_value);
    CHECK_THROWS_AS(grad_phi_A(p, d), DesignInfeasibleError);
    CHECK_THROWS_AS(sliding_sensors_optimize(p, d), DesignInfeasibleError);
}

TEST_CASE("sliding sensors") {
    const Fixture f;
    const DesignProblem p = f.problem(SeminormMode::M, true, true, 0.0);
    const SensorDesign p0 = make_design(f.cfg, {{0.3, 0.3}, {0.7, 0.35}, {0.45, 0.7}});
    SlidingConfig sc;
    sc.max_iterations = 15;
    const OptTrajectory t = sliding_sensors_optimize(p, p0, sc);
    REQUIRE(t.phi.size() == t.iterates.size());
    CHECK(t.phi.size() > 1);
    for (std::size_t k = 1; k < t.phi.size(); ++k) CHECK(t.phi[k] <= t.phi[k - 1]);
    CHECK(t.phi.back() < t.phi.front());
    for (const auto& d : t.iterates)
        for (const auto& q : d.positions) CHECK(f.s.region.contains(q));
    CHECK(t.shifted().front() == 0.0);

    SlidingConfig loose;
    loose.grad_tol = 1e300;
    const OptTrajectory t0 = sliding_sensors_optimize(p, p0, loose);
    CHECK(t0.phi.size() == 1);
    CHECK(t0.termination == "gradient");
}

TEST_CASE("weighted candidate objective") {
    const Fixture f;
    const DesignProblem p = f.problem(SeminormMode::M, true);
    const SensorDesign cands = candidate_grid(f.cfg, f.s.region, 4);
    const WeightedDesignObjective obj(p, cands, 1e-14);
    REQUIRE(obj.count() == 16);

    SUBCASE("binary weights reproduce the selected design") {
        Vector w = Vector::Zero(16);
        std::vector<Point> sel;
        for (int i : {1, 6, 11, 12}) {
            w(i) = 1.0;
            sel.push_back(cands.positions[i]);
        }
        CHECK(obj.evaluate(w, nullptr) == doctest::Approx(phi_A(p, make_design(f.cfg, sel))).epsilon(1e-8));
        CHECK(obj.evaluate(Vector::Zero(16), nullptr) == doctest::Approx(phi_A(p, make_design(f.cfg, {}))).epsilon(1e-8));
    }
    SUBCASE("weight gradient against central differences") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(0.2, 0.8);
        Vector w(16);
        for (auto& v : w) v = u(rng);
        Vector g;
        obj.evaluate(w, &g);
        for (int i = 0; i < 16; ++i) {
            const double h = 1e-5;
            Vector wp = w, wm = w;
            wp(i) += h;
            wm(i) -= h;
            const double fd = (obj.evaluate(wp, nullptr) - obj.evaluate(wm, nullptr)) / (2 * h);
            CHECK(g(i) == doctest::Approx(fd).epsilon(1e-5));
            CHECK(g(i) <= 0.0);
        }
    }
    SUBCASE("truncating weak directions moves the value very little") {
        const WeightedDesignObjective coarse(p, cands, 1e-8);
        const Vector w = Vector::Constant(16, 0.5);
        CHECK(coarse.evaluate(w, nullptr) == doctest::Approx(obj.evaluate(w, nullptr)).epsilon(1e-6));
    }
}

TEST_CASE("sparsification") {
    const Fixture f;
    const DesignProblem p = f.problem(SeminormMode::M, false);
    const SensorDesign cands = candidate_grid(f.cfg, f.s.region, 5);

    SparsifyConfig none;
    none.penalty_scale = 0.0;
    none.max_stages = 1;
    const SparsificationState all = sparsify_design(p, cands, none);
    CHECK(all.selected.size() == 25);
    CHECK(all.weights.minCoeff() > 0.99);

    SparsifyConfig sc;
    sc.penalty_scale = 4.0;
    const SparsificationState st = sparsify_design(p, cands, sc);
    CHECK(st.weights.minCoeff() >= 0.0);
    CHECK(st.weights.maxCoeff() <= 1.0);
    CHECK(st.selected.size() < 25);
    CHECK(st.selected_design().count() == static_cast<int>(st.selected.size()));
    CHECK(st.gamma_schedule.size() == st.q_schedule.size());
    for (std::size_t k = 1; k < st.gamma_schedule.size(); ++k) CHECK(st.gamma_schedule[k] > st.gamma_schedule[k - 1]);
}
