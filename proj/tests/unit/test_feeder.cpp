#include <doctest.h>

#include "voltkernel/errors.hpp"
#include "voltkernel/feeder.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace voltkernel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(VOLTKERNEL_DATA_DIR) / "feeder13.json";

FeederModel chain(std::vector<double> r, std::vector<double> x) {
    std::vector<Bus> buses(r.size() + 1);
    std::vector<Line> lines;
    for (std::size_t i = 0; i < r.size(); ++i) lines.push_back({i, i + 1, r[i], x[i]});
    return FeederModel(buses, lines);
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("vk_feeder_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("load the smallest feeder from csv tables") {
    const auto dir = scratch_dir("two_bus");
    std::ofstream(dir / "lines.csv") << "from,to,r_pu,x_pu\n0,1,0.01,0.02\n";
    std::ofstream(dir / "buses.csv") << "bus,p_nom,q_nom\n0,0,0\n1,0.1,0.05\n";
    const FeederModel f = load_feeder(dir);
    CHECK(f.size() == 1);
    CHECK(f.lines().size() == 1);
    CHECK(f.buses()[1].p_nom == 0.1);

    std::ofstream(dir / "lines.csv") << "from,to,r_pu,x_pu\n0,1,0.01,0.02\n1,0,0.01,0.02\n";
    std::ofstream(dir / "buses.csv") << "bus,p_nom,q_nom\n0,0,0\n1,0.1,0.05\n2,0,0\n";
    CHECK_THROWS_AS(load_feeder(dir), TopologyError);

    std::ofstream(dir / "lines.csv") << "from,to,r\n0,1,0.01\n";
    CHECK_THROWS_AS(load_feeder(dir), ParseError);
}

TEST_CASE("topology validation") {
    std::vector<Bus> b3(3);
    CHECK_THROWS_AS(FeederModel(b3, {{0, 1, 0.01, 0.01}, {1, 2, 0.01, 0.01}, {2, 0, 0.01, 0.01}}), TopologyError);
    CHECK_THROWS_AS(FeederModel(b3, {{0, 1, 0.01, 0.01}}), TopologyError);
    CHECK_THROWS_AS(FeederModel(b3, {{0, 1, 0.01, 0.01}, {1, 1, 0.01, 0.01}}), TopologyError);
    CHECK_THROWS_AS(FeederModel(b3, {{0, 1, 0.01, 0.01}, {1, 2, -0.01, 0.01}}), InvalidArgument);
    CHECK_THROWS_AS(FeederModel(b3, {{0, 1, 0.01, 0.01}, {1, 2, 0.0, 0.0}}), InvalidArgument);
    CHECK_THROWS_AS(parse_feeder_json("{\"buses\": ["), ParseError);

    // Lines listed child-first are reoriented away from the substation.
    const FeederModel f(b3, {{2, 1, 0.01, 0.02}, {1, 0, 0.03, 0.04}});
    CHECK(f.lines()[0].from == 1);
    CHECK(f.lines()[0].to == 2);
    CHECK(f.parent(2) == 1);
    CHECK(f.feeding_line(1) == 1);
}

TEST_CASE("bundled fixture") {
    const FeederModel f = load_feeder(kFixture);
    CHECK(f.size() == 12);
    CHECK(f.lines().size() == 12);
    const FeederModel again = parse_feeder_json(feeder_to_json(f));
    CHECK(again.p_nom() == f.p_nom());
    CHECK(build_sensitivities(again).X == build_sensitivities(f).X);
}

TEST_CASE("sensitivities from path sums") {
    SUBCASE("two buses") {
        const Sensitivities s = build_sensitivities(chain({0.01}, {0.02}));
        CHECK(s.R(0, 0) == 0.01);
        CHECK(s.X(0, 0) == 0.02);
    }
    SUBCASE("three-bus chain") {
        const Sensitivities s = build_sensitivities(chain({0.01, 0.01}, {0.01, 0.01}));
        MatrixXd expect(2, 2);
        expect << 0.01, 0.01, 0.01, 0.02;
        CHECK((s.R - expect).norm() < 1e-15);
    }
    SUBCASE("fixture: symmetric, positive definite, matches an explicit path oracle") {
        const FeederModel f = load_feeder(kFixture);
        const Sensitivities s = build_sensitivities(f);
        CHECK(s.R == s.R.transpose());
        CHECK(s.X == s.X.transpose());
        CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(s.R).eigenvalues().minCoeff() > 0);
        CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(s.X).eigenvalues().minCoeff() > 0);
        auto path = [&](std::size_t n) {
            std::vector<std::size_t> ls;
            for (; n != 0; n = f.parent(n)) ls.push_back(f.feeding_line(n));
            return ls;
        };
        for (std::size_t n = 1; n <= f.size(); ++n)
            for (std::size_t m = 1; m <= f.size(); ++m) {
                double r = 0, x = 0;
                for (std::size_t a : path(n))
                    for (std::size_t b : path(m))
                        if (a == b) {
                            r += f.lines()[a].r;
                            x += f.lines()[a].x;
                        }
                CHECK(s.R(n - 1, m - 1) == doctest::Approx(r).epsilon(1e-14));
                CHECK(s.X(n - 1, m - 1) == doctest::Approx(x).epsilon(1e-14));
            }
    }
}

TEST_CASE("extending a leaf never shrinks diagonal sensitivities") {
    const FeederModel f = load_feeder(kFixture);
    const Sensitivities base = build_sensitivities(f);
    for (std::size_t leaf = 1; leaf <= f.size(); ++leaf) {
        if (!f.children(leaf).empty()) continue;
        std::vector<Bus> buses = f.buses();
        buses.push_back({0.01, 0.0});
        std::vector<Line> lines = f.lines();
        lines.push_back({leaf, buses.size() - 1, 0.002, 0.001});
        const Sensitivities ext = build_sensitivities(FeederModel(buses, lines));
        for (Eigen::Index i = 0; i < base.R.rows(); ++i) {
            CHECK(ext.R(i, i) >= base.R(i, i));
            CHECK(ext.X(i, i) >= base.X(i, i));
        }
        CHECK(ext.R(static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(f.size())) >=
              base.R(static_cast<Eigen::Index>(leaf - 1), static_cast<Eigen::Index>(leaf - 1)));
    }
}

TEST_CASE("ac power flow") {
    SUBCASE("no injections is the flat profile in one sweep") {
        const FeederModel f = load_feeder(kFixture);
        const VoltageProfile vp = ac_power_flow(f, VectorXd::Zero(12), VectorXd::Zero(12));
        CHECK(vp.converged);
        CHECK(vp.iterations == 1);
        CHECK((vp.v.array() == f.v0()).all());
    }
    SUBCASE("light load on two buses agrees with the linear model") {
        const FeederModel f = chain({0.01}, {0.02});
        const VoltageProfile vp = ac_power_flow(f, VectorXd::Constant(1, -0.01), VectorXd::Zero(1));
        CHECK(vp.converged);
        CHECK(vp.v(0) < 1.0);
        CHECK(std::abs(vp.v(0) - (1.0 + 0.01 * -0.01)) <= 1e-4);
    }
    SUBCASE("two-bus closed form") {
        // |V|^4 - (v0^2 + 2(rp + xq))|V|^2 + (r^2 + x^2)(p^2 + q^2) = 0 for injection p + jq.
        const double r = 0.05, x = 0.08, p = -0.4, q = -0.2;
        const FeederModel f = chain({r}, {x});
        const VoltageProfile vp = ac_power_flow(f, VectorXd::Constant(1, p), VectorXd::Constant(1, q));
        const double bq = -(1.0 + 2 * (r * p + x * q));
        const double cq = (r * r + x * x) * (p * p + q * q);
        const double v2 = (-bq + std::sqrt(bq * bq - 4 * cq)) / 2;
        REQUIRE(vp.converged);
        CHECK(vp.v(0) == doctest::Approx(std::sqrt(v2)).epsilon(1e-9));
    }
    SUBCASE("nominal loads on the fixture") {
        const FeederModel f = load_feeder(kFixture);
        const VoltageProfile vp = ac_power_flow(f, -f.p_nom(), -f.q_nom());
        CHECK(vp.converged);
        CHECK(vp.iterations <= 30);
        // Contraction: the per-sweep change decays monotonically after three sweeps.
        for (std::size_t k = 3; k + 1 < vp.change_history.size(); ++k)
            CHECK(vp.change_history[k + 1] <= vp.change_history[k]);
    }
    SUBCASE("divergence is reported") {
        const FeederModel f = chain({0.5}, {0.5});
        const VoltageProfile vp = ac_power_flow(f, VectorXd::Constant(1, -5.0), VectorXd::Constant(1, -5.0));
        CHECK_FALSE(vp.converged);
    }
}

TEST_CASE("linear model fidelity and finite-difference reactance") {
    const FeederModel f = load_feeder(kFixture);
    const Sensitivities s = build_sensitivities(f);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        VectorXd p(12), q(12);
        for (int i = 0; i < 12; ++i) {
            p(i) = u(rng);
            q(i) = u(rng);
        }
        const VoltageProfile vp = ac_power_flow(f, p, q);
        REQUIRE(vp.converged);
        const VectorXd ldf = s.R * p + s.X * q + VectorXd::Constant(12, s.v0);
        worst = std::max(worst, (vp.v - ldf).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 0.01);

    const double h = 1e-5;
    for (int m = 0; m < 12; ++m) {
        VectorXd qp = VectorXd::Zero(12), qm = VectorXd::Zero(12);
        qp(m) = h;
        qm(m) = -h;
        const VectorXd col =
            (ac_power_flow(f, VectorXd::Zero(12), qp).v - ac_power_flow(f, VectorXd::Zero(12), qm).v) / (2 * h);
        for (int n = 0; n < 12; ++n) CHECK(std::abs(col(n) - s.X(n, m)) <= 1e-3);
    }
}
