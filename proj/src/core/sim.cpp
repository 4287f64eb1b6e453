#include "voltkernel/sim.hpp"

#include "voltkernel/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <ostream>

namespace voltkernel {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::pair<ControllerId, const char*> kControllerNames[] = {
    {ControllerId::NC, "NC"}, {ControllerId::C1, "C1"}, {ControllerId::C2, "C2"},
    {ControllerId::C3, "C3"}, {ControllerId::C4, "C4"}, {ControllerId::C5, "C5"},
    {ControllerId::C6, "C6"}, {ControllerId::C7, "C7"}, {ControllerId::R2, "R2"},
};

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

const char* to_string(ControllerId id) noexcept {
    for (const auto& [k, name] : kControllerNames)
        if (k == id) return name;
    return "?";
}

ControllerId parse_controller(const std::string& s) {
    for (const auto& [k, name] : kControllerNames)
        if (s == name) return k;
    throw InvalidArgument("unknown controller '" + s + "'");
}

bool is_learned(ControllerId id) noexcept {
    return id == ControllerId::C4 || id == ControllerId::C5 || id == ControllerId::C6 || id == ControllerId::C7 ||
           id == ControllerId::R2;
}

void SimConfig::validate() const {
    if (apply_window < 1) throw InvalidArgument("apply_window must be at least 1");
    if (train_window < static_cast<std::size_t>(std::max(train.cv_folds, 2)))
        throw InvalidArgument("train_window must be at least the number of cross-validation folds");
    if (controllers.empty()) throw InvalidArgument("no controllers requested");
    if (c2_lag < 0) throw InvalidArgument("c2_lag must be nonnegative");
    if (!(band > 0)) throw InvalidArgument("band must be positive");
    if (r2_like != ControllerId::C4 && r2_like != ControllerId::C5 && r2_like != ControllerId::C6 &&
        r2_like != ControllerId::C7)
        throw InvalidArgument("r2_like must name one of C4-C7");
    watt_var.validate();
    train.validate();
}

const ControllerReport* SimReport::find(ControllerId id) const {
    for (const auto& c : controllers)
        if (c.id == id) return &c;
    return nullptr;
}

SimReport metrics(const std::vector<ControllerLog>& logs, std::size_t buses, double band) {
    SimReport rep;
    rep.buses = buses;
    rep.band = band;
    const auto N = static_cast<Index>(buses);
    for (const auto& log : logs) {
        if (log.dv.empty()) continue;
        ControllerReport c;
        c.id = log.id;
        c.avg_dv = VectorXd::Zero(N);
        c.max_dv = VectorXd::Zero(N);
        c.minutes = log.dv.size();
        c.minute_t = log.minutes;
        c.ldf_cost = log.ldf_cost;
        for (const VectorXd& dv : log.dv) {
            if (dv.size() != N) throw DimensionError("voltage log has the wrong number of buses");
            c.avg_dv += dv;
            c.max_dv = c.max_dv.cwiseMax(dv);
            c.max_dv_t.push_back(dv.maxCoeff());
            c.violations += static_cast<std::size_t>((dv.array() > band).count());
        }
        c.avg_dv /= static_cast<double>(c.minutes);
        c.avg_abs_dv = c.avg_dv.mean();
        c.max_abs_dv = c.max_dv.maxCoeff();
        double sum = 0.0;
        for (double m : c.max_dv_t) sum += m;
        c.time_avg_max_dv = sum / static_cast<double>(c.minutes);
        sum = 0.0;
        for (double v : c.ldf_cost) sum += v;
        c.avg_ldf_cost = c.ldf_cost.empty() ? 0.0 : sum / static_cast<double>(c.ldf_cost.size());
        rep.controllers.push_back(std::move(c));
    }
    return rep;
}

namespace {

struct Learned {
    TrainConfig cfg;
    bool tuned = false;
};

TrainConfig base_config(const SimConfig& sc, ControllerId id) {
    TrainConfig c = sc.train;
    const bool gaussian = id == ControllerId::C5 || id == ControllerId::C7;
    c.objective = (id == ControllerId::C4 || id == ControllerId::C5) ? Objective::delta_tau : Objective::delta_eps;
    c.kernel.kind = gaussian ? KernelKind::gaussian : KernelKind::linear;
    c.kernel.jitter = gaussian ? sc.gaussian_jitter : sc.linear_jitter;
    c.kernel.gamma = gaussian ? sc.gaussian_gamma : 1.0;
    if (!gaussian) c.gamma_grid.clear();
    return c;
}

WindowStats window_stats(const RuleSet& rules, const ScenarioSet& scen, const Sensitivities& sens,
                         const TrainConfig& cfg) {
    WindowStats w;
    const SparsityReport sp = sparsity_report(rules, cfg.zero_tol);
    w.objective = rules.meta.objective_value;
    w.frac_nonzero = sp.frac_nonzero_overall;
    w.comm_count = rules.pruned(cfg.zero_tol).comm_count();
    w.train_avg_dv = (sens.X * training_dispatch(rules, scen) + scen.y).cwiseAbs().mean();
    w.mu = cfg.mu.value_or(0.0);
    w.gamma = cfg.kernel.kind == KernelKind::gaussian ? cfg.kernel.gamma : 0.0;
    return w;
}

}  // namespace

SimReport run_rolling(const FeederModel& f, const ProfileSet& profiles, const SimConfig& cfg) {
    cfg.validate();
    profiles.validate();
    const std::size_t N = f.size();
    if (profiles.buses() != N) throw DimensionError("profiles and feeder disagree on the number of buses");
    const std::size_t T = cfg.horizon == 0 ? profiles.horizon() : std::min(cfg.horizon, profiles.horizon());
    if (T < cfg.train_window + cfg.apply_window)
        throw InvalidArgument("horizon must cover at least one training window plus one control period");

    const Sensitivities sens = build_sensitivities(f);
    const InputLayout layout = make_layout(f, cfg.remote_lines, cfg.local_inputs);
    const auto n_ctrl = cfg.controllers.size();

    std::vector<ControllerLog> logs(n_ctrl);
    std::vector<std::vector<WindowStats>> windows(n_ctrl);
    std::map<ControllerId, Learned> learned;
    for (std::size_t k = 0; k < n_ctrl; ++k) {
        logs[k].id = cfg.controllers[k];
        const ControllerId id = cfg.controllers[k];
        if (id != ControllerId::NC && id != ControllerId::C1 && id != ControllerId::C2 && id != ControllerId::C3) {
            const ControllerId base = id == ControllerId::R2 ? cfg.r2_like : id;
            learned.try_emplace(base, Learned{base_config(cfg, base)});
        }
    }
    SimReport out_log;

    auto y_at = [&](std::size_t t) -> VectorXd {
        return sens.R * profiles.net_p(t) - sens.X * profiles.q_c.row(static_cast<Index>(t)).transpose();
    };

    std::size_t window_index = 0;
    for (std::size_t begin = cfg.train_window; begin < T; begin += cfg.apply_window, ++window_index) {
        const std::size_t end = std::min(begin + cfg.apply_window, T);
        const ScenarioSet scen =
            build_scenarios(profiles, Window{begin - cfg.train_window, begin}, sens, layout, cfg.normalize);

        // Tuning (first window, or every window when asked) and training.
        std::map<ControllerId, RuleSet> rules;
        std::map<ControllerId, std::string> failures;
        for (auto& [id, l] : learned) {
            try {
                if (!l.tuned || cfg.retune_each_window) {
                    if (!cfg.train.mu) {
                        TrainConfig grid_base = base_config(cfg, id);
                        grid_base.mu.reset();
                        l.cfg = cross_validate(scen, sens, default_grid(grid_base)).best;
                    }
                    l.tuned = true;
                }
                if (std::find(cfg.controllers.begin(), cfg.controllers.end(), id) != cfg.controllers.end())
                    rules.emplace(id, train(scen, sens, l.cfg));
            } catch (const Error& e) {
                failures.emplace(id, e.what());
            }
        }
        std::map<ControllerId, RuleSet> active;
        for (std::size_t k = 0; k < n_ctrl; ++k) {
            const ControllerId id = cfg.controllers[k];
            if (!is_learned(id)) continue;
            WindowStats w;
            const ControllerId base = id == ControllerId::R2 ? cfg.r2_like : id;
            const TrainConfig& tc = learned.at(base).cfg;
            try {
                if (failures.count(base)) throw SolverError(failures.at(base), 0, 0, 0);
                if (id == ControllerId::R2) {
                    TwoStepResult two = two_step_train(scen, sens, tc);
                    w = window_stats(two.rules, scen, sens, tc);
                    w.objective = average_cost(tc, sens, scen, two.fitted);
                    active.emplace(id, std::move(two.rules));
                } else {
                    w = window_stats(rules.at(id), scen, sens, tc);
                    active.emplace(id, rules.at(id));
                }
            } catch (const Error& e) {
                w.ok = false;
                w.error = e.what();
            }
            w.index = window_index;
            w.first_minute = profiles.timestamps[begin];
            windows[k].push_back(std::move(w));
        }

        // Apply over the control period.
        for (std::size_t t = begin; t < end; ++t) {
            const VectorXd y = y_at(t);
            const VectorXd q_bar = profiles.q_bar(t);
            const VectorXd p = profiles.net_p(t);
            const VectorXd q_c = profiles.q_c.row(static_cast<Index>(t)).transpose();
            std::vector<VectorXd> raw(N);
            for (std::size_t n = 0; n < N; ++n) raw[n] = raw_input(profiles, t, n, layout);

            for (std::size_t k = 0; k < n_ctrl; ++k) {
                const ControllerId id = cfg.controllers[k];
                std::optional<Dispatch> d;
                switch (id) {
                    case ControllerId::NC:
                        d = clamp_dispatch(VectorXd::Zero(static_cast<Index>(N)), q_bar, "NC");
                        break;
                    case ControllerId::C1:
                        d = opf_dispatch(y, q_bar, sens, cfg.dispatch_cost, kDispatchSolve, "C1");
                        break;
                    case ControllerId::C2: {
                        // Causal: data from t - lag (clipped at the first row),
                        // applied at t within the true limits.
                        const std::size_t ts = t >= static_cast<std::size_t>(cfg.c2_lag) ? t - cfg.c2_lag : 0;
                        const Dispatch stale = opf_dispatch(y_at(ts), profiles.q_bar(ts), sens, cfg.dispatch_cost);
                        d = clamp_dispatch(stale.q_g, q_bar, "C2");
                        break;
                    }
                    case ControllerId::C3: {
                        VectorXd q = VectorXd::Zero(static_cast<Index>(N));
                        for (Index n = 0; n < q.size(); ++n)
                            if (profiles.s_bar(n) > 0)
                                q(n) = watt_var(profiles.p_g(static_cast<Index>(t), n), profiles.s_bar(n),
                                                cfg.watt_var);
                        d = clamp_dispatch(q, q_bar, "C3");
                        break;
                    }
                    default: {
                        const auto it = active.find(id);
                        if (it != active.end()) d = eval_rules(it->second, raw, q_bar, to_string(id));
                        break;
                    }
                }
                if (!d) continue;  // window missing for this controller
                const VoltageProfile v = ac_power_flow(f, p, d->q_g - q_c);
                if (!v.converged) throw SolverError("AC power flow did not converge at minute " +
                                                        std::to_string(profiles.timestamps[t]),
                                                    0, 0, 0);
                logs[k].minutes.push_back(profiles.timestamps[t]);
                logs[k].dv.push_back((v.v.array() - f.v0()).abs().matrix());
                logs[k].ldf_cost.push_back(deviation_cost(cfg.dispatch_cost.objective, cfg.dispatch_cost.tau,
                                                          cfg.dispatch_cost.eps, sens.X * d->q_g + y));
                if (cfg.log_dispatch) out_log.dispatch_log.push_back({profiles.timestamps[t], std::move(*d)});
            }
        }
    }

    SimReport rep = metrics(logs, N, cfg.band);
    for (std::size_t k = 0; k < n_ctrl; ++k)
        for (auto& c : rep.controllers)
            if (c.id == cfg.controllers[k]) c.windows = windows[k];
    // A learned controller whose every window failed still reports its windows.
    for (std::size_t k = 0; k < n_ctrl; ++k)
        if (is_learned(cfg.controllers[k]) && logs[k].dv.empty()) {
            ControllerReport c;
            c.id = cfg.controllers[k];
            c.windows = windows[k];
            rep.controllers.push_back(std::move(c));
        }
    rep.dispatch_log = std::move(out_log.dispatch_log);
    return rep;
}

const char* to_string(SweepParam p) noexcept {
    switch (p) {
        case SweepParam::tau: return "tau";
        case SweepParam::eps: return "eps";
        case SweepParam::mu: return "mu";
    }
    return "?";
}

SweepParam parse_sweep_param(const std::string& s) {
    if (s == "tau") return SweepParam::tau;
    if (s == "eps") return SweepParam::eps;
    if (s == "mu") return SweepParam::mu;
    throw InvalidArgument("unknown sweep parameter '" + s + "'");
}

std::vector<SweepRow> sweep_tradeoff(const FeederModel& f, const ProfileSet& profiles, const SimConfig& cfg,
                                     ControllerId controller, SweepParam param, const std::vector<double>& grid) {
    if (grid.empty()) throw InvalidArgument("sweep grid is empty");
    if (!is_learned(controller)) throw InvalidArgument("sweeps need a learned controller");
    std::vector<SimConfig> runs;
    for (double v : grid) {
        SimConfig c = cfg;
        c.controllers = {controller};
        c.log_dispatch = false;
        switch (param) {
            case SweepParam::tau: c.train.tau = v; break;
            case SweepParam::eps: c.train.eps = v; break;
            case SweepParam::mu: c.train.mu = v; break;
        }
        c.validate();
        runs.push_back(std::move(c));
    }
    // Grid points are independent; results keep grid order.
    std::vector<std::future<SimReport>> jobs;
    for (const SimConfig& c : runs)
        jobs.push_back(std::async(std::launch::async, [&f, &profiles, &c] { return run_rolling(f, profiles, c); }));
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const SimReport rep = jobs[i].get();
        SweepRow row;
        row.value = grid[i];
        if (const ControllerReport* c = rep.find(controller)) {
            row.avg_dv = c->avg_abs_dv;
            std::size_t ok = 0;
            for (const auto& w : c->windows) {
                if (!w.ok) continue;
                ++ok;
                row.frac_nonzero += w.frac_nonzero;
                row.train_avg_dv += w.train_avg_dv;
                row.comm_count += static_cast<double>(w.comm_count);
            }
            if (ok > 0) {
                row.frac_nonzero /= static_cast<double>(ok);
                row.train_avg_dv /= static_cast<double>(ok);
                row.comm_count /= static_cast<double>(ok);
            }
        }
        rows.push_back(row);
    }
    return rows;
}

std::string report_to_json(const SimReport& r) {
    using nlohmann::ordered_json;
    ordered_json doc;
    doc["buses"] = r.buses;
    doc["band"] = r.band;
    doc["controllers"] = ordered_json::array();
    for (const auto& c : r.controllers) {
        ordered_json j;
        j["id"] = to_string(c.id);
        j["minutes"] = c.minutes;
        j["avg_abs_dv"] = c.avg_abs_dv;
        j["max_abs_dv"] = c.max_abs_dv;
        j["time_avg_max_dv"] = c.time_avg_max_dv;
        j["avg_ldf_cost"] = c.avg_ldf_cost;
        j["violations"] = c.violations;
        j["avg_dv"] = std::vector<double>(c.avg_dv.data(), c.avg_dv.data() + c.avg_dv.size());
        j["max_dv"] = std::vector<double>(c.max_dv.data(), c.max_dv.data() + c.max_dv.size());
        j["minute"] = c.minute_t;
        j["max_dv_t"] = c.max_dv_t;
        j["ldf_cost_t"] = c.ldf_cost;
        if (!c.windows.empty()) {
            j["windows"] = ordered_json::array();
            for (const auto& w : c.windows) {
                ordered_json wj{{"index", w.index},         {"first_minute", w.first_minute},
                                {"ok", w.ok},               {"objective", w.objective},
                                {"train_avg_dv", w.train_avg_dv}, {"frac_nonzero", w.frac_nonzero},
                                {"comm_count", w.comm_count}, {"mu", w.mu},
                                {"gamma", w.gamma}};
                if (!w.ok) wj["error"] = w.error;
                j["windows"].push_back(std::move(wj));
            }
        }
        doc["controllers"].push_back(std::move(j));
    }
    return doc.dump(2);
}

void write_bus_csv(std::ostream& out, const SimReport& r) {
    out << "controller,bus,avg_dv,max_dv\n";
    for (const auto& c : r.controllers)
        for (Index n = 0; n < c.avg_dv.size(); ++n)
            out << to_string(c.id) << ',' << n + 1 << ',' << format_double(c.avg_dv(n)) << ','
                << format_double(c.max_dv(n)) << '\n';
}

void write_window_csv(std::ostream& out, const SimReport& r) {
    out << "controller,window,objective,frac_nonzero,comm_count\n";
    for (const auto& c : r.controllers)
        for (const auto& w : c.windows) {
            out << to_string(c.id) << ',' << w.index << ',';
            if (w.ok)
                out << format_double(w.objective) << ',' << format_double(w.frac_nonzero) << ',' << w.comm_count;
            else
                out << ",,";  // missing window
            out << '\n';
        }
}

void write_sweep_csv(std::ostream& out, SweepParam param, const std::vector<SweepRow>& rows) {
    out << "param,value,avg_dv,frac_nonzero,train_avg_dv,comm_count\n";
    for (const auto& row : rows)
        out << to_string(param) << ',' << format_double(row.value) << ',' << format_double(row.avg_dv) << ','
            << format_double(row.frac_nonzero) << ',' << format_double(row.train_avg_dv) << ','
            << format_double(row.comm_count) << '\n';
}

}  // namespace voltkernel
