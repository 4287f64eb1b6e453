#include "voltkernel/trainer.hpp"

#include "voltkernel/errors.hpp"
#include "program_builder.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace voltkernel {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using detail::Affine;
using json = nlohmann::json;

const char* to_string(Objective o) noexcept {
    switch (o) {
        case Objective::delta_tau: return "delta_tau";
        case Objective::delta_eps: return "delta_eps";
        case Objective::delta_s: return "delta_s";
    }
    return "?";
}

Objective parse_objective(const std::string& s) {
    if (s == "delta_tau") return Objective::delta_tau;
    if (s == "delta_eps") return Objective::delta_eps;
    if (s == "delta_s") return Objective::delta_s;
    throw InvalidArgument("unknown objective '" + s + "'");
}

void TrainConfig::validate() const {
    if (objective == Objective::delta_tau && !(tau > 0)) throw InvalidArgument("tau must be positive");
    if (objective == Objective::delta_eps && !(eps > 0)) throw InvalidArgument("eps must be positive");
    if (mu && !(*mu >= 0)) throw InvalidArgument("mu must be nonnegative");
    for (double m : mu_grid)
        if (!(m >= 0)) throw InvalidArgument("mu grid entries must be nonnegative");
    for (double g : gamma_grid)
        if (!(g > 0)) throw InvalidArgument("gamma grid entries must be positive");
    if (cv_folds < 2) throw InvalidArgument("cv_folds must be at least 2");
    kernel.validate();
}

double deviation_cost(Objective o, double tau, double eps, const VectorXd& v) {
    switch (o) {
        case Objective::delta_tau: return std::max(v.norm() - tau, 0.0);
        case Objective::delta_eps: return (v.cwiseAbs().array() - eps).max(0.0).sum();
        case Objective::delta_s: return v.squaredNorm();
    }
    return 0.0;
}

double InverterRule::evaluate(const VectorXd& z) const {
    if (z.size() != z_train.rows()) throw DimensionError("rule input has the wrong length");
    double f = 0.0;
    for (Index s = 0; s < a.size(); ++s) {
        if (a(s) == 0.0) continue;
        double k = kernel_eval(kernel, z, z_train.col(s));
        if (kernel.jitter != 0.0 && z == z_train.col(s)) k += kernel.jitter;
        f += k * a(s);
    }
    return b ? f + *b : f;
}

VectorXd InverterRule::prepare(const VectorXd& raw) const {
    const VectorXd z = norm.apply(raw);
    return augmented ? augment_input(z) : z;
}

const InverterRule* RuleSet::find(std::size_t bus) const {
    for (const auto& r : rules)
        if (r.bus == bus) return &r;
    return nullptr;
}

RuleSet RuleSet::pruned(double zero_tol) const {
    RuleSet out = *this;
    for (auto& r : out.rules) {
        std::vector<Index> keep;
        for (Index s = 0; s < r.a.size(); ++s)
            if (std::abs(r.a(s)) > zero_tol) keep.push_back(s);
        VectorXd a(static_cast<Index>(keep.size()));
        MatrixXd z(r.z_train.rows(), static_cast<Index>(keep.size()));
        std::vector<int> ids;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            a(static_cast<Index>(k)) = r.a(keep[k]);
            z.col(static_cast<Index>(k)) = r.z_train.col(keep[k]);
            ids.push_back(r.scenario_ids[static_cast<std::size_t>(keep[k])]);
        }
        r.a = std::move(a);
        r.z_train = std::move(z);
        r.scenario_ids = std::move(ids);
    }
    return out;
}

std::size_t RuleSet::comm_count() const {
    std::size_t c = 0;
    for (const auto& r : rules) c += static_cast<std::size_t>((r.a.array() != 0.0).count()) + (r.b ? 1 : 0);
    return c;
}

// -- serialization --

namespace {

json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd json_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

json kernel_json(const KernelSpec& k) {
    return {{"kind", to_string(k.kind)}, {"gamma", k.gamma}, {"beta", k.beta}, {"jitter", k.jitter}};
}

KernelSpec json_kernel(const json& j) {
    KernelSpec k;
    k.kind = parse_kernel_kind(j.at("kind").get<std::string>());
    k.gamma = j.value("gamma", k.gamma);
    k.beta = j.value("beta", k.beta);
    k.jitter = j.value("jitter", k.jitter);
    k.validate();
    return k;
}

}  // namespace

std::string ruleset_to_json(const RuleSet& r) {
    json doc;
    doc["format"] = "voltkernel-ruleset";
    doc["version"] = 1;
    doc["buses"] = r.buses;
    json inputs;
    inputs["local"] = r.layout.local;
    inputs["remote"] = json::array();
    for (const auto& rem : r.layout.remote) inputs["remote"].push_back({{"line", rem.line}, {"downstream", rem.downstream}});
    doc["inputs"] = inputs;
    doc["meta"] = {{"objective", to_string(r.meta.objective)},
                   {"mu", r.meta.mu},
                   {"tau", r.meta.tau},
                   {"eps", r.meta.eps},
                   {"window", r.meta.window},
                   {"objective_value", r.meta.objective_value},
                   {"primal_res", r.meta.primal_res},
                   {"dual_res", r.meta.dual_res},
                   {"gap", r.meta.gap},
                   {"iterations", r.meta.iterations}};
    doc["inverters"] = json::array();
    for (const auto& rule : r.rules) {
        json j;
        j["bus"] = rule.bus + 1;
        j["kernel"] = kernel_json(rule.kernel);
        j["augmented"] = rule.augmented;
        if (rule.b) j["b"] = *rule.b;
        j["a"] = json::array();
        j["z_train"] = json::array();
        for (Index s = 0; s < rule.a.size(); ++s) {
            // Exact zeros carry no information; everything else round-trips bitwise.
            if (rule.a(s) == 0.0) continue;
            const int id = rule.scenario_ids[static_cast<std::size_t>(s)];
            j["a"].push_back({{"s", id}, {"v", rule.a(s)}});
            j["z_train"].push_back({{"s", id}, {"z", vec_json(rule.z_train.col(s))}});
        }
        j["norm_stats"] = {{"mean", vec_json(rule.norm.mean)}, {"std", vec_json(rule.norm.std)}};
        doc["inverters"].push_back(std::move(j));
    }
    return doc.dump(1);
}

RuleSet ruleset_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("ruleset json: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "voltkernel-ruleset") throw ParseError("not a ruleset document");
        RuleSet r;
        r.buses = doc.at("buses").get<std::size_t>();
        const json& inputs = doc.at("inputs");
        r.layout.local = inputs.at("local").get<bool>();
        for (const auto& rem : inputs.at("remote"))
            r.layout.remote.push_back({rem.at("line").get<std::size_t>(),
                                       rem.at("downstream").get<std::vector<std::size_t>>()});
        const json& meta = doc.at("meta");
        r.meta.objective = parse_objective(meta.at("objective").get<std::string>());
        r.meta.mu = meta.at("mu").get<double>();
        r.meta.tau = meta.at("tau").get<double>();
        r.meta.eps = meta.at("eps").get<double>();
        r.meta.window = meta.value("window", "");
        r.meta.objective_value = meta.value("objective_value", 0.0);
        r.meta.primal_res = meta.value("primal_res", 0.0);
        r.meta.dual_res = meta.value("dual_res", 0.0);
        r.meta.gap = meta.value("gap", 0.0);
        r.meta.iterations = meta.value("iterations", 0);
        const auto m = static_cast<Index>(r.layout.size());
        for (const auto& j : doc.at("inverters")) {
            InverterRule rule;
            const auto bus = j.at("bus").get<std::size_t>();
            if (bus < 1 || bus > r.buses) throw ParseError("inverter bus out of range");
            rule.bus = bus - 1;
            rule.kernel = json_kernel(j.at("kernel"));
            rule.augmented = j.value("augmented", false);
            if (j.contains("b")) rule.b = j.at("b").get<double>();
            std::map<int, VectorXd> zs;
            for (const auto& col : j.at("z_train")) zs[col.at("s").get<int>()] = json_vec(col.at("z"));
            const auto& a = j.at("a");
            rule.a.resize(static_cast<Index>(a.size()));
            rule.z_train.resize(m + (rule.augmented ? 1 : 0), static_cast<Index>(a.size()));
            Index k = 0;
            for (const auto& e : a) {
                const int id = e.at("s").get<int>();
                auto it = zs.find(id);
                if (it == zs.end()) throw ParseError("coefficient references a missing training input");
                if (it->second.size() != rule.z_train.rows()) throw ParseError("training input has the wrong length");
                rule.a(k) = e.at("v").get<double>();
                rule.z_train.col(k) = it->second;
                rule.scenario_ids.push_back(id);
                ++k;
            }
            rule.norm.mean = json_vec(j.at("norm_stats").at("mean"));
            rule.norm.std = json_vec(j.at("norm_stats").at("std"));
            if (rule.norm.mean.size() != m || rule.norm.std.size() != m)
                throw ParseError("normalization statistics have the wrong length");
            r.rules.push_back(std::move(rule));
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("ruleset json: ") + e.what());
    }
}

void save_ruleset(const std::filesystem::path& path, const RuleSet& r) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << ruleset_to_json(r) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

RuleSet load_ruleset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ruleset_from_json(ss.str());
}

// -- training --

std::vector<std::size_t> inverter_buses(const ScenarioSet& scen) {
    std::vector<std::size_t> out;
    for (Index n = 0; n < scen.s_bar.size(); ++n)
        if (scen.s_bar(n) > 0) out.push_back(static_cast<std::size_t>(n));
    return out;
}

std::vector<MatrixXd> training_inputs(const ScenarioSet& scen, const std::vector<std::size_t>& inverters, bool augment) {
    std::vector<MatrixXd> out;
    for (std::size_t n : inverters) {
        const MatrixXd& Z = scen.z.at(n);
        if (!augment) {
            out.push_back(Z);
            continue;
        }
        MatrixXd A(Z.rows() + 1, Z.cols());
        A.row(0).setOnes();
        A.bottomRows(Z.rows()) = Z;
        out.push_back(std::move(A));
    }
    return out;
}

TrainingProgram assemble(const ScenarioSet& scen, const GramSet& grams, const Sensitivities& sens,
                         const TrainConfig& cfg, double mu) {
    if (cfg.objective == Objective::delta_tau && !(cfg.tau > 0)) throw InvalidArgument("tau must be positive");
    if (cfg.objective == Objective::delta_eps && !(cfg.eps > 0)) throw InvalidArgument("eps must be positive");
    if (!(mu >= 0)) throw InvalidArgument("mu must be nonnegative");
    const auto S = static_cast<Index>(scen.scenarios());
    const auto N = static_cast<Index>(scen.buses());
    if (S == 0) throw InvalidArgument("no training scenarios");
    if (sens.X.rows() != N || sens.X.cols() != N) throw DimensionError("sensitivities do not match the scenarios");
    TrainingProgram tp;
    tp.inverters = inverter_buses(scen);
    tp.scenarios = static_cast<std::size_t>(S);
    const std::size_t I = tp.inverters.size();
    if (grams.K.size() != I || grams.K_sqrt.size() != I) throw DimensionError("one gram per inverter expected");
    for (std::size_t k = 0; k < I; ++k)
        if (grams.K[k].rows() != S || grams.K[k].cols() != S) throw DimensionError("gram size differs from S");

    detail::ProgramBuilder pb;
    for (std::size_t k = 0; k < I; ++k) {
        const std::string tag = "bus" + std::to_string(tp.inverters[k] + 1);
        tp.a_offset.push_back(pb.add_vars(S, "a_" + tag));
        tp.b_index.push_back(cfg.drop_intercept ? -1 : pb.add_var("b_" + tag));
    }
    for (std::size_t k = 0; k < I; ++k)
        tp.q_offset.push_back(pb.add_vars(S, "q_bus" + std::to_string(tp.inverters[k] + 1)));
    const Index dcount = cfg.objective == Objective::delta_eps ? N * S : S;
    tp.d_offset = pb.add_vars(dcount, "d");
    for (Index j = 0; j < dcount; ++j) pb.set_cost(tp.d_offset + j, 1.0 / static_cast<double>(S));
    for (std::size_t k = 0; k < I; ++k) {
        if (mu > 0) {
            tp.gamma_index.push_back(pb.add_var("gamma_bus" + std::to_string(tp.inverters[k] + 1)));
            pb.set_cost(tp.gamma_index.back(), mu);
        } else {
            tp.gamma_index.push_back(-1);
        }
    }

    // q_{k,s} = (K_k a_k)_s + b_k
    std::vector<Affine> eq;
    for (std::size_t k = 0; k < I; ++k)
        for (Index s = 0; s < S; ++s) {
            Affine r;
            for (Index j = 0; j < S; ++j) r.add(tp.a_offset[k] + j, grams.K[k](s, j));
            if (tp.b_index[k] >= 0) r.add(tp.b_index[k], 1.0);
            r.add(tp.q_offset[k] + s, -1.0);
            eq.push_back(std::move(r));
        }
    pb.add_cone(conic::ConeKind::zero, std::move(eq));

    // |q_{k,s}| <= q_bar
    std::vector<Affine> box;
    for (std::size_t k = 0; k < I; ++k)
        for (Index s = 0; s < S; ++s) {
            const double qb = scen.q_bar(static_cast<Index>(tp.inverters[k]), s);
            box.push_back(Affine(qb).add(tp.q_offset[k] + s, -1.0));
            box.push_back(Affine(qb).add(tp.q_offset[k] + s, 1.0));
        }
    pb.add_cone(conic::ConeKind::nonnegative, std::move(box));

    // Deviation rows v_s = X q_s + y_s.
    auto deviation = [&](Index s, Index m) {
        Affine v(scen.y(m, s));
        for (std::size_t k = 0; k < I; ++k) v.add(tp.q_offset[k] + s, sens.X(m, static_cast<Index>(tp.inverters[k])));
        return v;
    };
    switch (cfg.objective) {
        case Objective::delta_tau: {
            std::vector<Affine> nonneg;
            for (Index s = 0; s < S; ++s) nonneg.push_back(Affine().add(tp.d_offset + s, 1.0));
            pb.add_cone(conic::ConeKind::nonnegative, std::move(nonneg));
            for (Index s = 0; s < S; ++s) {
                std::vector<Affine> rows{Affine(cfg.tau).add(tp.d_offset + s, 1.0)};
                for (Index m = 0; m < N; ++m) rows.push_back(deviation(s, m));
                pb.add_cone(conic::ConeKind::soc, std::move(rows));
            }
            break;
        }
        case Objective::delta_eps: {
            std::vector<Affine> rows;
            for (Index s = 0; s < S; ++s)
                for (Index m = 0; m < N; ++m) {
                    const Index d = tp.d_offset + s * N + m;
                    rows.push_back(Affine().add(d, 1.0));
                    Affine up = deviation(s, m);  // d + eps - v >= 0
                    up.constant = cfg.eps - up.constant;
                    for (auto& t : up.terms) t.second = -t.second;
                    up.add(d, 1.0);
                    rows.push_back(std::move(up));
                    Affine lo = deviation(s, m);  // d + eps + v >= 0
                    lo.constant += cfg.eps;
                    lo.add(d, 1.0);
                    rows.push_back(std::move(lo));
                }
            pb.add_cone(conic::ConeKind::nonnegative, std::move(rows));
            break;
        }
        case Objective::delta_s: {
            for (Index s = 0; s < S; ++s) {
                std::vector<Affine> v;
                for (Index m = 0; m < N; ++m) v.push_back(deviation(s, m));
                pb.add_cone(conic::ConeKind::soc, detail::squared_norm_epigraph(v, tp.d_offset + s));
            }
            break;
        }
    }

    // ||K_k^{1/2} a_k|| <= gamma_k
    if (mu > 0)
        for (std::size_t k = 0; k < I; ++k) {
            std::vector<Affine> rows{Affine().add(tp.gamma_index[k], 1.0)};
            for (Index i = 0; i < S; ++i) {
                Affine r;
                for (Index j = 0; j < S; ++j) r.add(tp.a_offset[k] + j, grams.K_sqrt[k](i, j));
                rows.push_back(std::move(r));
            }
            pb.add_cone(conic::ConeKind::soc, std::move(rows));
        }

    tp.program = pb.build();
    return tp;
}

namespace {

std::vector<KernelSpec> specs_for(const TrainConfig& cfg, std::size_t count) {
    return std::vector<KernelSpec>(count, cfg.kernel);
}

std::string window_label(const ScenarioSet& scen) {
    if (scen.timestamps.empty()) return "";
    return std::to_string(scen.timestamps.front()) + "-" + std::to_string(scen.timestamps.back());
}

TrainingSolve train_fixed_full(const ScenarioSet& scen, const Sensitivities& sens, const TrainConfig& cfg,
                               double mu) {
    const std::vector<std::size_t> inverters = inverter_buses(scen);
    const std::vector<MatrixXd> Z = training_inputs(scen, inverters, cfg.drop_intercept);
    const GramSet grams = build_grams(specs_for(cfg, inverters.size()), Z);
    TrainingSolve out_full;
    out_full.program = assemble(scen, grams, sens, cfg, mu);
    out_full.solution = conic::solve(out_full.program.program, cfg.solver);
    const TrainingProgram& tp = out_full.program;
    const conic::ConeSolution& sol = out_full.solution;
    if (sol.status != conic::Status::optimal)
        throw SolverError(std::string("training solve ended with status ") + conic::to_string(sol.status) +
                              " (window " + window_label(scen) + ")",
                          sol.primal_res, sol.dual_res, sol.gap);

    RuleSet out;
    out.buses = scen.buses();
    out.layout = scen.layout;
    out.meta.objective = cfg.objective;
    out.meta.mu = mu;
    out.meta.tau = cfg.tau;
    out.meta.eps = cfg.eps;
    out.meta.window = window_label(scen);
    out.meta.objective_value = sol.primal_objective;
    out.meta.primal_res = sol.primal_res;
    out.meta.dual_res = sol.dual_res;
    out.meta.gap = sol.gap;
    out.meta.iterations = sol.iterations;
    const auto S = static_cast<Index>(scen.scenarios());
    for (std::size_t k = 0; k < inverters.size(); ++k) {
        InverterRule rule;
        rule.bus = inverters[k];
        rule.kernel = cfg.kernel;
        rule.a = sol.x.segment(tp.a_offset[k], S);
        if (tp.b_index[k] >= 0) rule.b = sol.x(tp.b_index[k]);
        rule.augmented = cfg.drop_intercept;
        rule.z_train = Z[k];
        for (Index s = 0; s < S; ++s) rule.scenario_ids.push_back(static_cast<int>(s));
        rule.norm = scen.norm_stats.at(inverters[k]);

        const VectorXd q = grams.K[k] * rule.a + VectorXd::Constant(S, rule.b.value_or(0.0));
        const VectorXd excess = q.cwiseAbs() - scen.q_bar.row(static_cast<Index>(rule.bus)).transpose();
        if (excess.maxCoeff() > cfg.feas_tol)
            throw SolverError("trained rule for bus " + std::to_string(rule.bus + 1) + " exceeds its limit by " +
                                  std::to_string(excess.maxCoeff()),
                              sol.primal_res, sol.dual_res, sol.gap);
        out.rules.push_back(std::move(rule));
    }
    // The coupling rows come first in the program, inverter-major.
    out_full.coupling_duals = MatrixXd::Zero(static_cast<Index>(scen.buses()), S);
    for (std::size_t k = 0; k < inverters.size(); ++k)
        out_full.coupling_duals.row(static_cast<Index>(inverters[k])) =
            sol.z.segment(static_cast<Index>(k) * S, S).transpose();
    out_full.rules = std::move(out);
    return out_full;
}

RuleSet train_fixed(const ScenarioSet& scen, const Sensitivities& sens, const TrainConfig& cfg, double mu) {
    return train_fixed_full(scen, sens, cfg, mu).rules;
}

}  // namespace

RuleSet train(const ScenarioSet& scen, const Sensitivities& sens, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.mu) return train_fixed(scen, sens, cfg, *cfg.mu);
    const CvResult cv = cross_validate(scen, sens, default_grid(cfg));
    return train_fixed(scen, sens, cv.best, *cv.best.mu);
}

TrainingSolve solve_training(const ScenarioSet& scen, const Sensitivities& sens, const TrainConfig& cfg) {
    cfg.validate();
    if (!cfg.mu) throw InvalidArgument("solve_training needs a fixed mu");
    return train_fixed_full(scen, sens, cfg, *cfg.mu);
}

MatrixXd training_dispatch(const RuleSet& rules, const ScenarioSet& scen) {
    const auto S = static_cast<Index>(scen.scenarios());
    MatrixXd Q = MatrixXd::Zero(static_cast<Index>(scen.buses()), S);
    for (const auto& rule : rules.rules) {
        const MatrixXd& Z = scen.z.at(rule.bus);
        for (Index s = 0; s < S; ++s) {
            const VectorXd z = rule.augmented ? augment_input(Z.col(s)) : VectorXd(Z.col(s));
            Q(static_cast<Index>(rule.bus), s) = rule.evaluate(z);
        }
    }
    return Q;
}

double average_cost(const TrainConfig& cfg, const Sensitivities& sens, const ScenarioSet& scen, const MatrixXd& Q) {
    const auto S = static_cast<Index>(scen.scenarios());
    if (Q.rows() != scen.y.rows() || Q.cols() != S) throw DimensionError("dispatch matrix must be N x S");
    double total = 0.0;
    for (Index s = 0; s < S; ++s) total += deviation_cost(cfg, sens.X * Q.col(s) + scen.y.col(s));
    return S > 0 ? total / static_cast<double>(S) : 0.0;
}

std::vector<TrainConfig> default_grid(const TrainConfig& cfg) {
    std::vector<TrainConfig> grid;
    std::vector<double> gammas = cfg.gamma_grid;
    if (gammas.empty() || cfg.kernel.kind == KernelKind::linear) gammas = {cfg.kernel.gamma};
    for (double g : gammas)
        for (double m : cfg.mu_grid) {
            TrainConfig c = cfg;
            c.mu = m;
            c.kernel.gamma = g;
            grid.push_back(c);
        }
    if (grid.empty()) throw InvalidArgument("cross validation grid is empty");
    return grid;
}

CvResult cross_validate(const ScenarioSet& scen, const Sensitivities& sens, const std::vector<TrainConfig>& grid) {
    if (grid.empty()) throw InvalidArgument("cross validation grid is empty");
    CvResult out;
    out.scores.assign(grid.size(), std::numeric_limits<double>::infinity());
    const std::size_t S = scen.scenarios();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const TrainConfig& cfg = grid[g];
        cfg.validate();
        if (!cfg.mu) throw InvalidArgument("cross validation grid entries need mu");
        const auto folds = static_cast<std::size_t>(cfg.cv_folds);
        if (S < folds) throw InvalidArgument("fewer scenarios than folds");
        double total = 0.0;
        for (std::size_t f = 0; f < folds; ++f) {
            std::vector<std::size_t> train_cols, test_cols;
            for (std::size_t s = 0; s < S; ++s) (s % folds == f ? test_cols : train_cols).push_back(s);
            if (test_cols.empty() || train_cols.empty()) throw InvalidArgument("degenerate cross validation fold");
            const ScenarioSet tr = scen.subset(train_cols);
            const ScenarioSet te = scen.subset(test_cols);
            const RuleSet rules = train_fixed(tr, sens, cfg, *cfg.mu);
            MatrixXd Q = training_dispatch(rules, te);
            Q = Q.cwiseMax(-te.q_bar).cwiseMin(te.q_bar);
            total += average_cost(cfg, sens, te, Q);
        }
        out.scores[g] = total / static_cast<double>(folds);
        if (out.scores[g] < out.scores[out.best_index]) out.best_index = g;
    }
    out.best = grid[out.best_index];
    return out;
}

SparsityReport sparsity_report(const RuleSet& rules, double zero_tol) {
    SparsityReport rep;
    rep.zero_tol = zero_tol;
    rep.frac_nonzero_per_inverter = VectorXd::Zero(static_cast<Index>(rules.buses));
    std::size_t nnz = 0, total = 0;
    for (const auto& r : rules.rules) {
        std::size_t here = 0;
        for (Index s = 0; s < r.a.size(); ++s)
            if (std::abs(r.a(s)) > zero_tol) {
                ++here;
                rep.support_scenarios.insert(r.scenario_ids[static_cast<std::size_t>(s)]);
            }
        if (here == 0) rep.inactive_inverters.insert(r.bus);
        if (r.a.size() > 0)
            rep.frac_nonzero_per_inverter(static_cast<Index>(r.bus)) =
                static_cast<double>(here) / static_cast<double>(r.a.size());
        nnz += here;
        total += static_cast<std::size_t>(r.a.size());
    }
    rep.frac_nonzero_overall = total ? static_cast<double>(nnz) / static_cast<double>(total) : 0.0;
    return rep;
}

}  // namespace voltkernel
