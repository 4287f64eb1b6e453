#include <doctest.h>

#include "voltkernel/errors.hpp"
#include "voltkernel/experiment.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace voltkernel;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path data_dir = VOLTKERNEL_DATA_DIR;

std::string with_feeder(const std::string& body) {
    return R"({"feeder": "feeder13.json")" + (body.empty() ? std::string() : ", " + body) + "}";
}

ExperimentConfig parse(const std::string& body) { return parse_experiment_config(with_feeder(body), data_dir); }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("voltkernel_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config defaults") {
    const ExperimentConfig c = parse("");
    CHECK(c.feeder == data_dir / "feeder13.json");
    REQUIRE(c.generator.has_value());
    CHECK(c.generator->horizon_min == 480);
    CHECK_FALSE(c.profiles.has_value());
    CHECK(c.seed == 1);
    CHECK(c.output_dir == data_dir / "out");
    CHECK(c.train_window.begin == 0);
    CHECK(c.train_window.size() == 30);
    CHECK_FALSE(c.train.mu.has_value());
    CHECK(c.sim.controllers.size() == 5);
    CHECK_FALSE(c.sweep.has_value());
}

TEST_CASE("config fields reach train and sim") {
    const ExperimentConfig c = parse(R"(
        "seed": 7, "output_dir": "/tmp/x",
        "generator": {"horizon_min": 120, "start_minute": 600, "penetration": 0.5},
        "inputs": {"local": true, "remote_lines": [2, 5], "normalize": false},
        "train": {"objective": "delta_eps", "eps": 2e-4, "mu": 1e-3,
                  "kernel": {"kind": "linear", "jitter": 0},
                  "solver": {"tol": 1e-8, "max_iters": 300},
                  "window": {"begin": 10, "size": 20}},
        "sim": {"controllers": ["C1", "C6", "R2"], "apply_window": 15, "c2_lag": 1,
                "r2_like": "C6", "dispatch_cost": {"objective": "delta_s"},
                "sweep": {"controller": "C6", "param": "mu", "values": [1e-4, 1e-2]}})");
    CHECK(c.seed == 7);
    CHECK(c.output_dir == "/tmp/x");
    CHECK(c.generator->start_minute == 600);
    CHECK(c.generator->penetration == 0.5);
    CHECK(c.remote_lines == std::vector<std::size_t>{2, 5});
    CHECK(c.sim.remote_lines == c.remote_lines);
    CHECK_FALSE(c.sim.normalize);
    CHECK(c.train.objective == Objective::delta_eps);
    CHECK(c.train.eps == 2e-4);
    CHECK(*c.train.mu == 1e-3);
    CHECK(c.train.kernel.kind == KernelKind::linear);
    CHECK(c.train.solver.tol == 1e-8);
    CHECK(c.train.solver.max_iters == 300);
    CHECK(c.sim.train.objective == Objective::delta_eps);  // the simulator trains like `train`
    CHECK(c.train_window.begin == 10);
    CHECK(c.train_window.end == 30);
    CHECK(c.sim.controllers == std::vector<ControllerId>{ControllerId::C1, ControllerId::C6, ControllerId::R2});
    CHECK(c.sim.apply_window == 15);
    CHECK(c.sim.c2_lag == 1);
    CHECK(c.sim.r2_like == ControllerId::C6);
    CHECK(c.sim.dispatch_cost.objective == Objective::delta_s);
    REQUIRE(c.sweep.has_value());
    CHECK(c.sweep->param == SweepParam::mu);
    CHECK(c.sweep->values == std::vector<double>{1e-4, 1e-2});
}

TEST_CASE("config errors") {
    const auto bad = [](const std::string& text) {
        CHECK_THROWS_AS(parse_experiment_config(text, data_dir), ConfigError);
    };
    bad("{");
    bad("[]");
    bad(R"({"generator": {}})");                              // feeder missing
    bad(R"({"feeder": "nope.json"})");                        // file missing
    bad(R"({"feeder": 3})");                                  // wrong type
    bad(with_feeder(R"("colour": "red")"));                  // unknown root key
    bad(with_feeder(R"("train": {"kernel": {"gama": 1}})")); // unknown nested key
    bad(with_feeder(R"("train": {"objective": "delta_x"})"));
    bad(with_feeder(R"("train": {"tau": -1})"));
    bad(with_feeder(R"("train": {"window": {"size": 0}})"));
    bad(with_feeder(R"("sim": {"controllers": ["C9"]})"));
    bad(with_feeder(R"("sim": {"apply_window": 0})"));
    bad(with_feeder(R"("sim": {"sweep": {"values": []}})"));
    bad(with_feeder(R"("sim": {"sweep": {"param": "tau"}})"));
    bad(with_feeder(R"("profiles": "p.csv", "generator": {})"));
    bad(with_feeder(R"("profiles": "missing.csv")"));
    CHECK_THROWS_AS(load_experiment_config(data_dir / "no_such_config.json"), ConfigError);

    try {
        parse(R"("sim": {"watt_var": {"p3": 1}})");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("sim.watt_var.p3") != std::string::npos);
    }
}

TEST_CASE("output directory precedence") {
    const ExperimentConfig c = parse(R"("output_dir": "/tmp/from_config")");
    ::unsetenv("VOLTKERNEL_OUT");
    CHECK(resolve_output_dir(c, std::nullopt) == "/tmp/from_config");
    ::setenv("VOLTKERNEL_OUT", "/tmp/from_env", 1);
    CHECK(resolve_output_dir(c, std::nullopt) == "/tmp/from_env");
    CHECK(resolve_output_dir(c, std::string("/tmp/from_cli")) == "/tmp/from_cli");
    ::unsetenv("VOLTKERNEL_OUT");
}

TEST_CASE("generate, train and simulate write their files once") {
    ExperimentConfig c = parse(R"(
        "generator": {"horizon_min": 75, "start_minute": 660},
        "train": {"mu": 1e-4, "tau": 2e-3, "kernel": {"kind": "linear"}, "window": {"begin": 0, "size": 30}},
        "sim": {"controllers": ["NC", "C1", "C4"], "apply_window": 45, "log_dispatch": true})");
    const fs::path dir = scratch("commands");

    const json gen = json::parse(run_generate(c, dir, false));
    CHECK(gen["T"] == 75);
    CHECK(gen["N"] == 12);
    CHECK(gen["solar_buses"] == 9);
    const std::string profiles = slurp(dir / "profiles.csv");
    CHECK_THROWS_AS(run_generate(c, dir, false), IoError);
    CHECK(slurp(dir / "profiles.csv") == profiles);  // untouched
    run_generate(c, dir, true);
    CHECK(slurp(dir / "profiles.csv") == profiles);  // same seed, same bytes

    // Training from the written profiles matches training from the generator.
    ExperimentConfig from_file = c;
    from_file.generator.reset();
    from_file.profiles = dir / "profiles.csv";
    const json tr = json::parse(run_train(c, dir / "a", false));
    const json tr_file = json::parse(run_train(from_file, dir / "b", false));
    CHECK(tr["objective"] == "delta_tau");
    CHECK(tr["cross_validated"] == false);
    CHECK(tr["inverters"] == 9);
    CHECK(tr_file["objective_value"].get<double>() ==
          doctest::Approx(tr["objective_value"].get<double>()).epsilon(1e-6));
    const RuleSet rules = load_ruleset(dir / "a" / "ruleset.json");
    CHECK(rules.rules.size() == 9);
    CHECK_THROWS_AS(run_train(c, dir / "a", false), IoError);

    c.train_window = Window{60, 90};
    CHECK_THROWS_AS(run_train(c, dir / "c", false), ConfigError);

    const json sim = json::parse(run_simulate(c, dir / "sim", false));
    CHECK(sim["controllers"].size() == 3);
    for (const auto& ctrl : sim["controllers"]) CHECK(ctrl["minutes"] == 45);
    for (const char* f : {"report.json", "bus_metrics.csv", "window_metrics.csv", "dispatch.csv"})
        CHECK(fs::exists(dir / "sim" / f));
    CHECK_FALSE(fs::exists(dir / "sim" / "sweep.csv"));
    const json report = json::parse(slurp(dir / "sim" / "report.json"));
    CHECK(report.contains("controllers"));
    // A partial clash still refuses before anything is written.
    fs::remove(dir / "sim" / "report.json");
    CHECK_THROWS_AS(run_simulate(c, dir / "sim", false), IoError);
    CHECK_FALSE(fs::exists(dir / "sim" / "report.json"));

    ExperimentConfig no_gen = from_file;
    CHECK_THROWS_AS(run_generate(no_gen, dir / "d", false), ConfigError);
    fs::remove_all(dir);
}
