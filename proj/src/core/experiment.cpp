#include "voltkernel/experiment.hpp"

#include "voltkernel/errors.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace voltkernel {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Strict view of one JSON object: every key must be consumed.
class Block {
public:
    Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }
    Block(const Block&) = delete;
    Block& operator=(const Block&) = delete;

    /// Rejects keys nobody asked for.
    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key " + child(it.key()));
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key)) throw ConfigError("missing key " + child(key));
        return j_.at(key);
    }
    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = raw(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("wrong type for " + child(key));
        }
    }
    template <class T>
    void get(const std::string& key, std::optional<T>& out) {
        if (!has(key)) return;
        if (raw(key).is_null()) {
            out.reset();
            return;
        }
        T v{};
        get(key, v);
        out = v;
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class T, class F>
T parsed(const std::string& what, const std::string& text, F&& parse) {
    try {
        return parse(text);
    } catch (const InvalidArgument& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

void read_solver(Block& b, conic::SolveOptions& s) {
    b.get("tol", s.tol);
    b.get("polish_tol", s.polish_tol);
    b.get("max_iters", s.max_iters);
    if (b.has("method")) {
        std::string m;
        b.get("method", m);
        if (m == "interior_point") s.method = conic::Method::interior_point;
        else if (m == "admm") s.method = conic::Method::admm;
        else throw ConfigError("unknown solver method '" + m + "'");
    }
    b.done();
}

void read_kernel(Block& b, KernelSpec& k) {
    if (b.has("kind")) {
        std::string kind;
        b.get("kind", kind);
        k.kind = parsed<KernelKind>("kernel kind", kind, parse_kernel_kind);
    }
    b.get("gamma", k.gamma);
    b.get("beta", k.beta);
    b.get("jitter", k.jitter);
    b.done();
}

Objective read_objective(Block& b, const std::string& key, Objective fallback) {
    if (!b.has(key)) return fallback;
    std::string s;
    b.get(key, s);
    return parsed<Objective>("objective", s, parse_objective);
}

void read_train(Block& b, ExperimentConfig& cfg) {
    TrainConfig& t = cfg.train;
    t.objective = read_objective(b, "objective", t.objective);
    b.get("tau", t.tau);
    b.get("eps", t.eps);
    b.get("mu", t.mu);
    b.get("mu_grid", t.mu_grid);
    b.get("gamma_grid", t.gamma_grid);
    b.get("drop_intercept", t.drop_intercept);
    b.get("cv_folds", t.cv_folds);
    b.get("zero_tol", t.zero_tol);
    b.get("feas_tol", t.feas_tol);
    if (b.has("kernel")) {
        Block k(b.raw("kernel"), b.child("kernel"));
        read_kernel(k, t.kernel);
    }
    if (b.has("solver")) {
        Block s(b.raw("solver"), b.child("solver"));
        read_solver(s, t.solver);
    }
    if (b.has("window")) {
        Block w(b.raw("window"), b.child("window"));
        std::size_t begin = cfg.train_window.begin;
        std::size_t size = cfg.train_window.size();
        w.get("begin", begin);
        w.get("size", size);
        w.done();
        cfg.train_window = Window{begin, begin + size};
    }
    b.done();
}

void read_generator(Block& b, GeneratorConfig& g) {
    b.get("horizon_min", g.horizon_min);
    b.get("start_minute", g.start_minute);
    b.get("penetration", g.penetration);
    b.get("peak_scale", g.peak_scale);
    b.get("pf_lo", g.pf_lo);
    b.get("pf_hi", g.pf_hi);
    b.get("oversize", g.oversize);
    b.get("noise", g.noise);
    b.get("noise_corr", g.noise_corr);
    b.get("solar_ratio_lo", g.solar_ratio_lo);
    b.get("solar_ratio_hi", g.solar_ratio_hi);
    b.done();
}

ControllerId read_controller(const std::string& s) { return parsed<ControllerId>("controller", s, parse_controller); }

void read_sim(Block& b, ExperimentConfig& cfg) {
    SimConfig& s = cfg.sim;
    b.get("train_window", s.train_window);
    b.get("apply_window", s.apply_window);
    b.get("horizon", s.horizon);
    if (b.has("controllers")) {
        std::vector<std::string> ids;
        b.get("controllers", ids);
        s.controllers.clear();
        for (const auto& id : ids) s.controllers.push_back(read_controller(id));
    }
    b.get("linear_jitter", s.linear_jitter);
    b.get("gaussian_gamma", s.gaussian_gamma);
    b.get("gaussian_jitter", s.gaussian_jitter);
    b.get("retune_each_window", s.retune_each_window);
    b.get("c2_lag", s.c2_lag);
    b.get("band", s.band);
    b.get("log_dispatch", s.log_dispatch);
    if (b.has("r2_like")) {
        std::string id;
        b.get("r2_like", id);
        s.r2_like = read_controller(id);
    }
    if (b.has("dispatch_cost")) {
        Block d(b.raw("dispatch_cost"), b.child("dispatch_cost"));
        s.dispatch_cost.objective = read_objective(d, "objective", s.dispatch_cost.objective);
        d.get("tau", s.dispatch_cost.tau);
        d.get("eps", s.dispatch_cost.eps);
        d.done();
    }
    if (b.has("watt_var")) {
        Block w(b.raw("watt_var"), b.child("watt_var"));
        w.get("p1", s.watt_var.p1);
        w.get("p2", s.watt_var.p2);
        w.get("oversize", s.watt_var.oversize);
        w.done();
    }
    if (b.has("sweep")) {
        Block w(b.raw("sweep"), b.child("sweep"));
        SweepSpec sw;
        std::string id = "C4";
        std::string param = "tau";
        w.get("controller", id);
        w.get("param", param);
        sw.controller = read_controller(id);
        sw.param = parsed<SweepParam>("sweep param", param, parse_sweep_param);
        w.raw("values");
        w.get("values", sw.values);
        if (sw.values.empty()) throw ConfigError("sim.sweep.values must not be empty");
        w.done();
        cfg.sweep = std::move(sw);
    }
    b.done();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

ProfileSet obtain_profiles(const ExperimentConfig& cfg, const FeederModel& f) {
    if (cfg.profiles) return read_profiles_csv(*cfg.profiles);
    return synthesize_profiles(f, *cfg.generator, cfg.seed);
}

// Refuses to touch existing files unless forced; writes via a temporary.
class Outputs {
public:
    Outputs(fs::path dir, bool force) : dir_(std::move(dir)), force_(force) {}

    fs::path claim(const std::string& name) {
        const fs::path p = dir_ / name;
        if (fs::exists(p) && !force_)
            throw IoError("output file " + p.string() + " already exists (rerun with --force to replace it)");
        return p;
    }
    void make_dir() const {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    }
    void write(const fs::path& p, const std::string& content) {
        make_dir();
        std::error_code ec;
        const fs::path tmp = p.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write " + tmp.string());
            out << content;
            if (!out.flush()) throw IoError("cannot write " + tmp.string());
        }
        fs::rename(tmp, p, ec);
        if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
        written_.push_back(p.string());
    }
    const std::vector<std::string>& written() const { return written_; }

private:
    fs::path dir_;
    bool force_;
    std::vector<std::string> written_;
};

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    {
        Block root(doc, "");
        std::string feeder;
        root.raw("feeder");
        root.get("feeder", feeder);
        cfg.feeder = resolve(base_dir, feeder);
        if (root.has("profiles") && root.has("generator"))
            throw ConfigError("config needs exactly one of 'profiles' and 'generator'");
        if (root.has("profiles")) {
            std::string p;
            root.get("profiles", p);
            cfg.profiles = resolve(base_dir, p);
        } else {
            cfg.generator = GeneratorConfig{};
            if (root.has("generator")) {
                Block g(root.raw("generator"), "generator");
                read_generator(g, *cfg.generator);
            }
        }
        std::string out = cfg.output_dir.string();
        root.get("output_dir", out);
        cfg.output_dir = resolve(base_dir, out);
        root.get("seed", cfg.seed);
        if (root.has("inputs")) {
            Block in(root.raw("inputs"), "inputs");
            in.get("local", cfg.local_inputs);
            in.get("remote_lines", cfg.remote_lines);
            in.get("normalize", cfg.normalize);
            in.done();
        }
        if (root.has("train")) {
            Block t(root.raw("train"), "train");
            read_train(t, cfg);
        }
        cfg.sim.train = cfg.train;
        if (root.has("sim")) {
            Block s(root.raw("sim"), "sim");
            read_sim(s, cfg);
        }
        root.done();
    }
    cfg.sim.remote_lines = cfg.remote_lines;
    cfg.sim.local_inputs = cfg.local_inputs;
    cfg.sim.normalize = cfg.normalize;

    if (!fs::exists(cfg.feeder)) throw ConfigError("feeder path does not exist: " + cfg.feeder.string());
    if (cfg.profiles && !fs::exists(*cfg.profiles))
        throw ConfigError("profiles path does not exist: " + cfg.profiles->string());
    if (cfg.train_window.size() == 0) throw ConfigError("train.window.size must be positive");
    try {
        cfg.train.validate();
        cfg.sim.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str(), path.parent_path());
}

fs::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<std::string>& cli_out) {
    if (cli_out && !cli_out->empty()) return *cli_out;
    if (const char* env = std::getenv("VOLTKERNEL_OUT"); env && *env) return env;
    return cfg.output_dir;
}

std::string run_generate(const ExperimentConfig& cfg, const fs::path& out_dir, bool force) {
    if (!cfg.generator) throw ConfigError("generate needs a 'generator' block (config names a profiles file)");
    const FeederModel f = load_feeder(cfg.feeder);
    Outputs out(out_dir, force);
    const fs::path target = out.claim("profiles.csv");
    const ProfileSet p = synthesize_profiles(f, *cfg.generator, cfg.seed);
    const fs::path tmp = target.string() + ".tmp";
    out.make_dir();
    write_profiles_csv(tmp, p);
    std::ifstream in(tmp, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    in.close();
    fs::remove(tmp);
    out.write(target, ss.str());

    std::size_t solar = 0;
    for (Eigen::Index n = 0; n < p.s_bar.size(); ++n) solar += p.s_bar(n) > 0;
    ordered_json s{{"command", "generate"},
                   {"T", p.horizon()},
                   {"N", p.buses()},
                   {"penetration", cfg.generator->penetration},
                   {"solar_buses", solar},
                   {"seed", cfg.seed},
                   {"files", out.written()}};
    return s.dump();
}

std::string run_train(const ExperimentConfig& cfg, const fs::path& out_dir, bool force) {
    const FeederModel f = load_feeder(cfg.feeder);
    Outputs out(out_dir, force);
    const fs::path target = out.claim("ruleset.json");
    const ProfileSet p = obtain_profiles(cfg, f);
    if (cfg.train_window.end > p.horizon())
        throw ConfigError("train.window extends past the profile horizon (" + std::to_string(p.horizon()) + " rows)");
    const Sensitivities sens = build_sensitivities(f);
    const InputLayout layout = make_layout(f, cfg.remote_lines, cfg.local_inputs);
    const ScenarioSet scen = build_scenarios(p, cfg.train_window, sens, layout, cfg.normalize);

    TrainConfig tc = cfg.train;
    bool cross_validated = false;
    if (!tc.mu) {
        tc = cross_validate(scen, sens, default_grid(tc)).best;
        cross_validated = true;
    }
    const TrainingSolve solve = solve_training(scen, sens, tc);
    out.write(target, ruleset_to_json(solve.rules));

    const SparsityReport sp = sparsity_report(solve.rules, tc.zero_tol);
    const RuleSetMeta& m = solve.rules.meta;
    ordered_json s{{"command", "train"},
                   {"objective", to_string(tc.objective)},
                   {"objective_value", m.objective_value},
                   {"mu", *tc.mu},
                   {"cross_validated", cross_validated},
                   {"kernel", to_string(tc.kernel.kind)},
                   {"inverters", solve.rules.rules.size()},
                   {"frac_nonzero", sp.frac_nonzero_overall},
                   {"inactive_inverters", sp.inactive_inverters.size()},
                   {"comm_count", solve.rules.pruned(tc.zero_tol).comm_count()},
                   {"primal_res", m.primal_res},
                   {"dual_res", m.dual_res},
                   {"gap", m.gap},
                   {"iterations", m.iterations},
                   {"files", out.written()}};
    if (tc.kernel.kind == KernelKind::gaussian) s["gamma"] = tc.kernel.gamma;
    return s.dump();
}

std::string run_simulate(const ExperimentConfig& cfg, const fs::path& out_dir, bool force) {
    const FeederModel f = load_feeder(cfg.feeder);
    Outputs out(out_dir, force);
    const fs::path report_path = out.claim("report.json");
    const fs::path bus_path = out.claim("bus_metrics.csv");
    const fs::path window_path = out.claim("window_metrics.csv");
    std::optional<fs::path> dispatch_path, sweep_path;
    if (cfg.sim.log_dispatch) dispatch_path = out.claim("dispatch.csv");
    if (cfg.sweep) sweep_path = out.claim("sweep.csv");

    const ProfileSet p = obtain_profiles(cfg, f);
    const auto t0 = std::chrono::steady_clock::now();
    const SimReport rep = run_rolling(f, p, cfg.sim);
    std::vector<SweepRow> rows;
    if (cfg.sweep) rows = sweep_tradeoff(f, p, cfg.sim, cfg.sweep->controller, cfg.sweep->param, cfg.sweep->values);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    out.write(report_path, report_to_json(rep));
    std::ostringstream bus, win;
    write_bus_csv(bus, rep);
    write_window_csv(win, rep);
    out.write(bus_path, bus.str());
    out.write(window_path, win.str());
    if (dispatch_path) {
        std::ostringstream d;
        write_dispatch_csv(d, rep.dispatch_log);
        out.write(*dispatch_path, d.str());
    }
    if (sweep_path) {
        std::ostringstream sw;
        write_sweep_csv(sw, cfg.sweep->param, rows);
        out.write(*sweep_path, sw.str());
    }

    ordered_json ctrls = ordered_json::array();
    for (const auto& c : rep.controllers) {
        std::size_t missing = 0;
        for (const auto& w : c.windows) missing += !w.ok;
        ctrls.push_back({{"id", to_string(c.id)},
                         {"avg_abs_dv", c.avg_abs_dv},
                         {"max_abs_dv", c.max_abs_dv},
                         {"violations", c.violations},
                         {"minutes", c.minutes},
                         {"missing_windows", missing}});
    }
    ordered_json s{{"command", "simulate"},
                   {"controllers", ctrls},
                   {"seconds", seconds},
                   {"files", out.written()}};
    return s.dump();
}

}  // namespace voltkernel
