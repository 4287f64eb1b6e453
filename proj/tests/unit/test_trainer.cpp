#include <doctest.h>

#include "voltkernel/errors.hpp"
#include "voltkernel/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

using namespace voltkernel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(VOLTKERNEL_DATA_DIR) / "feeder13.json";

struct Fixture {
    FeederModel feeder;
    Sensitivities sens;
    ProfileSet profiles;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        FeederModel feeder = load_feeder(kFixture);
        Sensitivities sens = build_sensitivities(feeder);
        ProfileSet profiles = synthesize_profiles(feeder, GeneratorConfig{}, 1);
        return Fixture{std::move(feeder), std::move(sens), std::move(profiles)};
    }();
    return f;
}

ScenarioSet fixture_window(std::size_t begin, std::size_t count = 30) {
    const Fixture& f = fixture();
    return build_scenarios(f.profiles, Window{begin, begin + count}, f.sens, make_layout(f.feeder, {}), true);
}

// Hand-built single-bus scenario set: X = [x], y given, limits q_bar.
ScenarioSet single_bus(const VectorXd& y, double q_bar) {
    const auto S = y.size();
    ScenarioSet sc;
    for (Eigen::Index s = 0; s < S; ++s) sc.timestamps.push_back(static_cast<int>(s));
    sc.y = y.transpose();
    sc.q_bar = MatrixXd::Constant(1, S, q_bar);
    sc.p_c = MatrixXd::Zero(1, S);
    sc.q_c = MatrixXd::Zero(1, S);
    sc.p_g = MatrixXd::Zero(1, S);
    sc.s_bar = VectorXd::Constant(1, q_bar);
    MatrixXd z(3, S);
    for (Eigen::Index s = 0; s < S; ++s) z.col(s) << 1.0, static_cast<double>(s), y(s);
    sc.z = {z};
    sc.norm_stats = {NormStats::identity(3)};
    return sc;
}

Sensitivities scalar_sens(double x) {
    Sensitivities s;
    s.R = MatrixXd::Constant(1, 1, x);
    s.X = MatrixXd::Constant(1, 1, x);
    return s;
}

double grid_argmin(const std::function<double(double)>& f, double lo, double hi) {
    double best = lo;
    double best_val = f(lo);
    for (int pass = 0; pass < 3; ++pass) {
        const double step = (hi - lo) / 2000.0;
        for (int i = 0; i <= 2000; ++i) {
            const double q = lo + i * step;
            const double v = f(q);
            if (v < best_val) {
                best_val = v;
                best = q;
            }
        }
        lo = std::max(lo, best - step);
        hi = std::min(hi, best + step);
    }
    return best;
}

double mean_abs_deviation(const Sensitivities& sens, const ScenarioSet& sc, const MatrixXd& Q) {
    return (sens.X * Q + sc.y).cwiseAbs().mean();
}

}  // namespace

TEST_CASE("objective parsing and costs") {
    CHECK(parse_objective("delta_tau") == Objective::delta_tau);
    CHECK(parse_objective("delta_eps") == Objective::delta_eps);
    CHECK(parse_objective("delta_s") == Objective::delta_s);
    CHECK_THROWS_AS(parse_objective("l1"), InvalidArgument);

    const Eigen::Vector3d v(0.003, -0.004, 0.0);
    CHECK(deviation_cost(Objective::delta_tau, 0.001, 0, v) == doctest::Approx(0.004));
    CHECK(deviation_cost(Objective::delta_tau, 0.01, 0, v) == 0.0);
    CHECK(deviation_cost(Objective::delta_eps, 0, 0.0035, v) == doctest::Approx(0.0005));
    CHECK(deviation_cost(Objective::delta_s, 0, 0, v) == doctest::Approx(2.5e-5));

    TrainConfig c;
    c.tau = 0.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = TrainConfig{};
    c.mu = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = TrainConfig{};
    c.cv_folds = 1;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("single-bus programs against a grid-search oracle") {
    const double x = 0.05;
    const double d = 0.02;
    TrainConfig cfg;
    cfg.tau = 1e-9;
    cfg.mu = 0.0;
    cfg.kernel.kind = KernelKind::linear;

    SUBCASE("unconstrained: q cancels the deviation") {
        const ScenarioSet sc = single_bus(VectorXd::Constant(1, d), 10.0);
        const RuleSet r = train(sc, scalar_sens(x), cfg);
        const double q = training_dispatch(r, sc)(0, 0);
        const double oracle =
            grid_argmin([&](double v) { return std::max(std::abs(x * v + d) - cfg.tau, 0.0); }, -10.0, 10.0);
        CHECK(q == doctest::Approx(-d / x).epsilon(1e-6));
        CHECK(std::abs(q - oracle) <= 1e-5);
    }
    SUBCASE("limit active") {
        const double q_bar = 0.25;  // below d / x = 0.4
        const ScenarioSet sc = single_bus(VectorXd::Constant(1, d), q_bar);
        const RuleSet r = train(sc, scalar_sens(x), cfg);
        const double q = training_dispatch(r, sc)(0, 0);
        const double oracle =
            grid_argmin([&](double v) { return std::max(std::abs(x * v + d) - cfg.tau, 0.0); }, -q_bar, q_bar);
        CHECK(std::abs(q + q_bar) <= 1e-6);
        CHECK(std::abs(q - oracle) <= 1e-5);
    }
}

TEST_CASE("dead zone wider than every deviation gives zero coefficients") {
    const ScenarioSet sc = fixture_window(60);
    TrainConfig cfg;
    double ymax = 0.0;
    for (Eigen::Index s = 0; s < sc.y.cols(); ++s) ymax = std::max(ymax, sc.y.col(s).norm());
    cfg.tau = 1.5 * ymax;
    cfg.mu = 1e-3;
    const TrainingSolve t = solve_training(sc, fixture().sens, cfg);
    for (const auto& rule : t.rules.rules) CHECK(rule.a.cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(t.solution.x.segment(t.program.d_offset, 30).cwiseAbs().maxCoeff() <= 1e-7);
    CHECK(std::abs(t.rules.meta.objective_value) <= 1e-7);
}

TEST_CASE("assemble layout and errors") {
    const ScenarioSet sc = fixture_window(0, 10);
    const auto inv = inverter_buses(sc);
    CHECK(inv.size() == 9);  // 75 % penetration: buses 4, 8, 12 have no inverter
    CHECK(std::find(inv.begin(), inv.end(), 3u) == inv.end());
    TrainConfig cfg;
    cfg.kernel.kind = KernelKind::gaussian;
    const GramSet g = build_grams(std::vector<KernelSpec>(inv.size(), cfg.kernel), training_inputs(sc, inv, false));

    const TrainingProgram tau = assemble(sc, g, fixture().sens, cfg, 1e-3);
    CHECK(tau.program.num_vars() == 9 * 10 + 9 + 9 * 10 + 10 + 9);
    cfg.objective = Objective::delta_eps;
    const TrainingProgram eps = assemble(sc, g, fixture().sens, cfg, 0.0);
    CHECK(eps.program.num_vars() == 9 * 10 + 9 + 9 * 10 + 12 * 10);
    CHECK(eps.gamma_index[0] == -1);

    cfg.drop_intercept = true;
    const GramSet ga = build_grams(std::vector<KernelSpec>(inv.size(), cfg.kernel), training_inputs(sc, inv, true));
    const TrainingProgram sel = assemble(sc, ga, fixture().sens, cfg, 1e-3);
    CHECK(sel.b_index[0] == -1);
    CHECK(training_inputs(sc, inv, true)[0].rows() == 4);

    cfg.eps = 0.0;
    CHECK_THROWS_AS(assemble(sc, g, fixture().sens, cfg, 1e-3), InvalidArgument);
    cfg.eps = 1e-3;
    CHECK_THROWS_AS(assemble(sc, g, fixture().sens, cfg, -1.0), InvalidArgument);
    GramSet short_set = g;
    short_set.K.pop_back();
    CHECK_THROWS_AS(assemble(sc, short_set, fixture().sens, cfg, 1e-3), DimensionError);
    Sensitivities wrong;
    wrong.X = MatrixXd::Zero(3, 3);
    CHECK_THROWS_AS(assemble(sc, g, wrong, cfg, 1e-3), DimensionError);
}

TEST_CASE("solver objective matches the recomputed training objective") {
    const ScenarioSet sc = fixture_window(150);
    const auto& sens = fixture().sens;
    for (Objective o : {Objective::delta_tau, Objective::delta_eps, Objective::delta_s})
        for (KernelKind k : {KernelKind::linear, KernelKind::gaussian}) {
            CAPTURE(to_string(o));
            CAPTURE(to_string(k));
            TrainConfig cfg;
            cfg.objective = o;
            cfg.tau = 2e-3;
            cfg.eps = 5e-4;
            cfg.mu = 1e-3;
            cfg.kernel.kind = k;
            cfg.kernel.gamma = 3.0;
            const RuleSet r = train(sc, sens, cfg);
            const MatrixXd Q = training_dispatch(r, sc);
            double reg = 0.0;
            for (const auto& rule : r.rules) {
                const MatrixXd L = gram_sqrt(gram(rule.kernel, rule.z_train));
                reg += (L * rule.a).norm();
            }
            const double recomputed = average_cost(cfg, sens, sc, Q) + *cfg.mu * reg;
            CHECK(std::abs(r.meta.objective_value - recomputed) <= 1e-6);
            CHECK(r.meta.primal_res <= 1e-7);
            // Training-data feasibility invariant.
            for (const auto& rule : r.rules)
                CHECK((Q.row(rule.bus).cwiseAbs() - sc.q_bar.row(rule.bus)).maxCoeff() <= 1e-6);
        }
}

TEST_CASE("trained rules beat doing nothing and vanish on zero data") {
    const ScenarioSet sc = fixture_window(240);
    const auto& sens = fixture().sens;
    TrainConfig cfg;
    cfg.tau = 1e-3;
    cfg.mu = 1e-4;
    const RuleSet r = train(sc, sens, cfg);
    const MatrixXd Q = training_dispatch(r, sc);
    CHECK(average_cost(cfg, sens, sc, Q) <= average_cost(cfg, sens, sc, MatrixXd::Zero(12, 30)) + 1e-9);

    ScenarioSet quiet = sc;
    quiet.y.setZero();
    const RuleSet z = train(quiet, sens, cfg);
    CHECK(training_dispatch(z, quiet).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(std::abs(z.meta.objective_value) <= 1e-7);
}

TEST_CASE("coefficients vanish on scenarios inside the dead zone") {
    // Three windows here; the acceptance binary runs 20.
    const auto& sens = fixture().sens;
    const double tol = 1e-7;
    int checked = 0;
    for (std::size_t begin : {30u, 200u, 330u}) {
        const ScenarioSet sc = fixture_window(begin);
        TrainConfig cfg;
        cfg.tau = 3e-3;
        cfg.mu = 1e-4;
        cfg.kernel.gamma = 3.0;
        const RuleSet r = train(sc, sens, cfg);
        const MatrixXd Q = training_dispatch(r, sc);
        for (Eigen::Index s = 0; s < 30; ++s) {
            if ((sens.X * Q.col(s) + sc.y.col(s)).norm() > cfg.tau - 10 * tol) continue;
            for (const auto& rule : r.rules) {
                if (std::abs(Q(rule.bus, s)) > sc.q_bar(rule.bus, s) - 10 * tol) continue;
                ++checked;
                CHECK(std::abs(rule.a(s)) <= 1e-6);
            }
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("a single violated bus makes the scenario critical for every active inverter") {
    const auto& sens = fixture().sens;
    const ScenarioSet sc = fixture_window(100);
    TrainConfig cfg;
    cfg.objective = Objective::delta_eps;
    cfg.eps = 1e-4;
    cfg.mu = 1e-4;
    const TrainingSolve t = solve_training(sc, sens, cfg);
    CHECK(t.coupling_duals.rows() == 12);
    CHECK(t.coupling_duals.row(3).isZero());
    const MatrixXd Q = training_dispatch(t.rules, sc);
    int checked = 0;
    int excluded = 0;
    for (Eigen::Index s = 0; s < 30; ++s) {
        if ((sens.X * Q.col(s) + sc.y.col(s)).cwiseAbs().maxCoeff() < cfg.eps + 1e-6) continue;
        for (const auto& rule : t.rules.rules) {
            ++checked;
            if (std::abs(rule.a(s)) > 1e-9) continue;
            const bool degenerate = std::abs(t.coupling_duals(rule.bus, s)) < 1e-9 ||
                                    rule.a.cwiseAbs().maxCoeff() <= 1e-6;
            CHECK(degenerate);
            ++excluded;
        }
    }
    CHECK(checked > 0);
    CHECK(excluded < checked);
}

TEST_CASE("wider dead zones trade deviation for sparsity") {
    const auto& sens = fixture().sens;
    const ScenarioSet sc = fixture_window(270);
    double prev_dev = -1.0;
    double prev_frac = 2.0;
    for (double tau : {1e-3, 2e-3, 3e-3, 4e-3, 5e-3}) {
        TrainConfig cfg;
        cfg.tau = tau;
        cfg.mu = 1e-4;
        const RuleSet r = train(sc, sens, cfg);
        const double dev = mean_abs_deviation(sens, sc, training_dispatch(r, sc));
        const double frac = sparsity_report(r).frac_nonzero_overall;
        CAPTURE(tau);
        CHECK(dev >= prev_dev - 1e-6);
        CHECK(frac <= prev_frac + 0.2);
        prev_dev = dev;
        prev_frac = frac;
    }
}

TEST_CASE("stronger regularization switches inverters off") {
    const auto& sens = fixture().sens;
    const ScenarioSet sc = fixture_window(300);
    TrainConfig cfg;
    cfg.drop_intercept = true;
    cfg.tau = 2e-3;
    cfg.kernel.kind = KernelKind::linear;
    cfg.mu = 1e-4;
    const SparsityReport lo = sparsity_report(train(sc, sens, cfg));
    cfg.mu = 1e-2;
    const RuleSet hi_rules = train(sc, sens, cfg);
    const SparsityReport hi = sparsity_report(hi_rules);
    CHECK(hi.inactive_inverters.size() >= lo.inactive_inverters.size());
    for (const auto& rule : hi_rules.rules) CHECK_FALSE(rule.b.has_value());
}

TEST_CASE("cross validation") {
    const auto& sens = fixture().sens;
    const ScenarioSet sc = fixture_window(60, 20);
    TrainConfig base;
    base.tau = 1e-3;
    base.kernel.kind = KernelKind::linear;

    SUBCASE("singleton grid") {
        TrainConfig c = base;
        c.mu = 1e-3;
        const CvResult r = cross_validate(sc, sens, {c});
        CHECK(r.best_index == 0);
        CHECK(*r.best.mu == 1e-3);
        CHECK(r.scores.size() == 1);
    }
    SUBCASE("duplicates tie and the first wins") {
        TrainConfig c = base;
        c.mu = 1e-3;
        const CvResult r = cross_validate(sc, sens, {c, c});
        CHECK(r.scores[0] == r.scores[1]);
        CHECK(r.best_index == 0);
    }
    SUBCASE("a huge penalty validates no better than none") {
        TrainConfig zero = base;
        zero.mu = 0.0;
        TrainConfig huge = base;
        huge.mu = 1e6;
        const CvResult r = cross_validate(sc, sens, {huge, zero});
        CHECK(r.scores[0] >= r.scores[1] - 1e-12);
    }
    SUBCASE("default grid") {
        TrainConfig c = base;
        c.kernel.kind = KernelKind::gaussian;
        c.gamma_grid = {1.0, 3.0};
        const auto grid = default_grid(c);
        CHECK(grid.size() == 8);
        CHECK(grid[1].kernel.gamma == 1.0);
        CHECK(*grid[1].mu == 1e-4);
        CHECK(grid[4].kernel.gamma == 3.0);
        c.kernel.kind = KernelKind::linear;
        CHECK(default_grid(c).size() == 4);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(cross_validate(sc, sens, {}), InvalidArgument);
        TrainConfig c = base;
        c.mu = 1e-3;
        c.cv_folds = 25;
        CHECK_THROWS_AS(cross_validate(sc, sens, {c}), InvalidArgument);
    }
}

TEST_CASE("sparsity report") {
    RuleSet r;
    r.buses = 3;
    for (std::size_t bus : {0u, 2u}) {
        InverterRule rule;
        rule.bus = bus;
        rule.a = VectorXd::Zero(5);
        rule.z_train = MatrixXd::Zero(3, 5);
        for (int s = 0; s < 5; ++s) rule.scenario_ids.push_back(s);
        r.rules.push_back(rule);
    }
    SparsityReport rep = sparsity_report(r);
    CHECK(rep.frac_nonzero_overall == 0.0);
    CHECK(rep.support_scenarios.empty());
    CHECK(rep.inactive_inverters == std::set<std::size_t>{0, 2});

    r.rules[0].a(3) = 0.5;
    r.rules[1].a(1) = 1e-7;  // below the threshold
    rep = sparsity_report(r);
    CHECK(rep.support_scenarios == std::set<int>{3});
    CHECK(rep.frac_nonzero_overall == doctest::Approx(0.1));
    CHECK(rep.frac_nonzero_per_inverter.size() == 3);
    CHECK(rep.frac_nonzero_per_inverter(0) == doctest::Approx(0.2));
    CHECK(rep.frac_nonzero_per_inverter(1) == 0.0);
    CHECK(rep.inactive_inverters == std::set<std::size_t>{2});
    CHECK(sparsity_report(r, 1e-8).inactive_inverters.empty());
}

TEST_CASE("rule sets survive serialization bit for bit") {
    const ScenarioSet sc = fixture_window(360);
    TrainConfig cfg;
    cfg.tau = 3e-3;
    cfg.mu = 1e-4;
    cfg.kernel.gamma = 3.0;
    const RuleSet r = train(sc, fixture().sens, cfg);
    const RuleSet back = ruleset_from_json(ruleset_to_json(r));
    REQUIRE(back.rules.size() == r.rules.size());
    CHECK(back.meta.mu == r.meta.mu);
    CHECK(back.meta.window == r.meta.window);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const VectorXd raw = VectorXd::NullaryExpr(3, [&] { return g(rng); });
        for (std::size_t k = 0; k < r.rules.size(); ++k) {
            const VectorXd z = r.rules[k].prepare(raw);
            CHECK(back.rules[k].prepare(raw) == z);
            CHECK(back.rules[k].evaluate(z) == r.rules[k].evaluate(z));
        }
    }
    // Training inputs evaluate to K a + b through the stored columns.
    CHECK(training_dispatch(back, sc) == training_dispatch(r, sc));

    const RuleSet p = r.pruned(1e-6);
    std::size_t nnz = 0;
    for (const auto& rule : r.rules) nnz += static_cast<std::size_t>((rule.a.array().abs() > 1e-6).count());
    CHECK(p.comm_count() == nnz + r.rules.size());
    const RuleSet pback = ruleset_from_json(ruleset_to_json(p));
    for (std::size_t k = 0; k < p.rules.size(); ++k) {
        CHECK(pback.rules[k].a == p.rules[k].a);
        CHECK(pback.rules[k].evaluate(p.rules[k].prepare(VectorXd::Ones(3))) ==
              p.rules[k].evaluate(p.rules[k].prepare(VectorXd::Ones(3))));
    }

    CHECK_THROWS_AS(ruleset_from_json("{\"format\": \"other\"}"), ParseError);
    CHECK_THROWS_AS(ruleset_from_json("not json"), ParseError);
}

TEST_CASE("training failures surface as solver errors") {
    const ScenarioSet sc = fixture_window(0, 10);
    TrainConfig cfg;
    cfg.mu = 1e-3;
    cfg.solver.max_iters = 2;
    cfg.solver.polish_tol = 0.0;
    try {
        train(sc, fixture().sens, cfg);
        FAIL("expected a SolverError");
    } catch (const SolverError& e) {
        CHECK(e.primal_res >= 0.0);
        CHECK(std::string(e.what()).find("max_iters") != std::string::npos);
    }
}
