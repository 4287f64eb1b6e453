#include <doctest.h>

#include "voltkernel/conic.hpp"
#include "voltkernel/errors.hpp"

#include "support/random_socp.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace voltkernel;
using namespace voltkernel::conic;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("project_soc closed form") {
    SUBCASE("inside the cone is unchanged") {
        auto [x, t] = project_soc(Eigen::Vector2d(1, 0), 2.0);
        CHECK(x(0) == 1.0);
        CHECK(x(1) == 0.0);
        CHECK(t == 2.0);
    }
    SUBCASE("polar cone maps to the origin") {
        auto [x, t] = project_soc(Eigen::Vector2d(1, 0), -2.0);
        CHECK(x.norm() == 0.0);
        CHECK(t == 0.0);
    }
    SUBCASE("boundary formula") {
        auto [x, t] = project_soc(Eigen::Vector2d(3, 4), 0.0);
        CHECK(x(0) == doctest::Approx(1.5));
        CHECK(x(1) == doctest::Approx(2.0));
        CHECK(t == doctest::Approx(2.5));
    }
}

TEST_CASE("project_soc is idempotent and nonexpansive") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int k = 1 + trial % 6;
        VectorXd u(k), v(k);
        for (int i = 0; i < k; ++i) {
            u(i) = g(rng);
            v(i) = g(rng);
        }
        const double tu = g(rng);
        const double tv = g(rng);
        auto [pu, ptu] = project_soc(u, tu);
        auto [pv, ptv] = project_soc(v, tv);
        auto [ppu, pptu] = project_soc(pu, ptu);
        CHECK((ppu - pu).norm() <= 1e-12 * (1 + pu.norm()));
        CHECK(std::abs(pptu - ptu) <= 1e-12 * (1 + std::abs(ptu)));
        const double dproj = std::sqrt((pu - pv).squaredNorm() + (ptu - ptv) * (ptu - ptv));
        const double din = std::sqrt((u - v).squaredNorm() + (tu - tv) * (tu - tv));
        CHECK(dproj <= din + 1e-12);
    }
}

namespace {

ConeProgram norm_epigraph() {
    // minimize t  s.t.  (t, 1, 1) in SOC
    ConeProgram p;
    p.c = VectorXd::Ones(1);
    p.A = MatrixXd::Zero(3, 1);
    p.A(0, 0) = -1.0;
    p.b = Eigen::Vector3d(0.0, 1.0, 1.0);
    p.cones = {{ConeKind::soc, 3}};
    return p;
}

ConeProgram lp_corner() {
    // minimize x  s.t.  x - 3 >= 0
    ConeProgram p;
    p.c = VectorXd::Ones(1);
    p.A = -MatrixXd::Ones(1, 1);
    p.b = VectorXd::Constant(1, -3.0);
    p.cones = {{ConeKind::nonnegative, 1}};
    return p;
}

}  // namespace

TEST_CASE("solve small programs with both methods") {
    for (Method method : {Method::interior_point, Method::admm}) {
        CAPTURE(static_cast<int>(method));
        SolveOptions opt;
        opt.method = method;
        const ConeSolution epi = solve(norm_epigraph(), opt);
        CHECK(epi.status == Status::optimal);
        CHECK(epi.x(0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));

        const ConeSolution lp = solve(lp_corner(), opt);
        CHECK(lp.status == Status::optimal);
        CHECK(lp.x(0) == doctest::Approx(3.0).epsilon(1e-6));
        CHECK(std::max({lp.primal_res, lp.dual_res, lp.gap}) <= opt.tol);
    }
}

TEST_CASE("equality rows through the zero cone") {
    // minimize x0 + 2 x1  s.t.  x0 + x1 = 1, x >= 0   ->   x = (1, 0)
    ConeProgram p;
    p.c = Eigen::Vector2d(1.0, 2.0);
    p.A.resize(3, 2);
    p.A << 1, 1, -1, 0, 0, -1;
    p.b = Eigen::Vector3d(1.0, 0.0, 0.0);
    p.cones = {{ConeKind::zero, 1}, {ConeKind::nonnegative, 2}};
    for (Method method : {Method::interior_point, Method::admm}) {
        SolveOptions opt;
        opt.method = method;
        const ConeSolution sol = solve(p, opt);
        REQUIRE(sol.status == Status::optimal);
        CHECK(sol.primal_objective == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(sol.primal_objective >= sol.dual_objective - opt.tol);
    }
}

TEST_CASE("infeasible program is detected") {
    // x >= 1 and x <= -1
    ConeProgram p;
    p.c = VectorXd::Ones(1);
    p.A.resize(2, 1);
    p.A << -1, 1;
    p.b = Eigen::Vector2d(-1.0, -1.0);
    p.cones = {{ConeKind::nonnegative, 2}};
    CHECK(solve(p).status == Status::infeasible_detected);
}

TEST_CASE("unbounded program is detected") {
    // minimize x s.t. x <= 1
    ConeProgram p;
    p.c = VectorXd::Ones(1);
    p.A = MatrixXd::Ones(1, 1);
    p.b = VectorXd::Ones(1);
    p.cones = {{ConeKind::nonnegative, 1}};
    CHECK(solve(p).status == Status::infeasible_detected);
}

TEST_CASE("random feasible SOCP matches the analytic optimum") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        const testsupport::RandomSocp inst = testsupport::random_socp(rng, 30, 45);
        const ConeSolution sol = solve(inst.program);
        REQUIRE(sol.status == Status::optimal);
        CHECK(std::abs(sol.primal_objective - inst.optimal_value) <= 1e-5 * (1 + std::abs(inst.optimal_value)));
        CHECK(sol.primal_objective >= sol.dual_objective - 1e-7 * (1 + std::abs(sol.primal_objective) + std::abs(sol.dual_objective)));
    }
}

TEST_CASE("admm agrees with interior point on a random SOCP") {
    std::mt19937_64 rng(99);
    const testsupport::RandomSocp inst = testsupport::random_socp(rng, 12, 20);
    SolveOptions opt;
    opt.method = Method::admm;
    opt.tol = 1e-6;
    const ConeSolution admm = solve(inst.program, opt);
    REQUIRE(admm.status == Status::optimal);
    CHECK(admm.primal_objective == doctest::Approx(inst.optimal_value).epsilon(1e-4));
}

TEST_CASE("solve is deterministic") {
    std::mt19937_64 rng(5);
    const testsupport::RandomSocp inst = testsupport::random_socp(rng, 20, 30);
    const ConeSolution a = solve(inst.program);
    const ConeSolution b = solve(inst.program);
    CHECK(a.iterations == b.iterations);
    CHECK((a.x - b.x).norm() == 0.0);
    CHECK((a.z - b.z).norm() == 0.0);
}

TEST_CASE("residuals") {
    SUBCASE("empty program") {
        ConeProgram p;
        p.c.resize(0);
        p.A.resize(0, 0);
        p.b.resize(0);
        const Residuals r = residuals(p, VectorXd(), VectorXd());
        CHECK(r.primal == 0.0);
        CHECK(r.dual == 0.0);
        CHECK(r.gap == 0.0);
    }
    SUBCASE("certified pair and perturbation") {
        const ConeProgram p = lp_corner();
        const ConeSolution sol = solve(p);
        const Residuals r = residuals(p, sol.x, sol.z);
        CHECK(r.primal <= 1e-7);
        CHECK(r.dual <= 1e-7);
        CHECK(r.gap <= 1e-7);
        VectorXd moved = sol.x;
        moved(0) -= 1e-2;
        const Residuals rp = residuals(p, moved, sol.z);
        // 1e-2 violation of x >= 3, scaled by 1 + ||b|| = 4
        CHECK(rp.primal == doctest::Approx(1e-2 / 4.0).epsilon(1e-3));
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(residuals(lp_corner(), VectorXd::Zero(2), VectorXd::Zero(1)), DimensionError);
    }
}

TEST_CASE("validate rejects mismatched cones") {
    ConeProgram p = lp_corner();
    p.cones = {{ConeKind::nonnegative, 2}};
    CHECK_THROWS_AS(p.validate(), DimensionError);
}

TEST_CASE("text dump round trip") {
    std::mt19937_64 rng(3);
    ConeProgram p = testsupport::random_socp(rng, 6, 9).program;
    p.var_names.clear();
    for (std::size_t j = 0; j < p.num_vars(); ++j) p.var_names.push_back("x" + std::to_string(j));
    std::stringstream buf;
    write_program(buf, p);
    const ConeProgram q = read_program(buf);
    CHECK(q.A == p.A);
    CHECK(q.b == p.b);
    CHECK(q.c == p.c);
    CHECK(q.cones.size() == p.cones.size());
    CHECK(q.var_names == p.var_names);

    std::istringstream bad("conic-program 1\ndims 1 1\ncone cube 1\n");
    CHECK_THROWS_AS(read_program(bad), ParseError);
}
