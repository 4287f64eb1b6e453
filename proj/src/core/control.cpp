#include "voltkernel/control.hpp"

#include "voltkernel/errors.hpp"
#include "program_builder.hpp"

#include <cmath>
#include <ostream>

namespace voltkernel {

using detail::Affine;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Dispatch clamp_dispatch(const VectorXd& q, const VectorXd& q_bar, std::string source) {
    if (q.size() != q_bar.size()) throw DimensionError("dispatch and limits differ in length");
    Dispatch d;
    d.q_g.resize(q.size());
    d.clipped.assign(static_cast<std::size_t>(q.size()), false);
    d.source = std::move(source);
    for (Index n = 0; n < q.size(); ++n) {
        const double lim = std::max(q_bar(n), 0.0);
        d.q_g(n) = std::clamp(q(n), -lim, lim);
        d.clipped[static_cast<std::size_t>(n)] = d.q_g(n) != q(n);
    }
    return d;
}

Dispatch eval_rules(const RuleSet& rules, const std::vector<VectorXd>& raw_inputs, const VectorXd& q_bar,
                    std::string source) {
    if (static_cast<std::size_t>(q_bar.size()) != rules.buses || raw_inputs.size() != rules.buses)
        throw DimensionError("eval_rules expects one input and one limit per feeder bus");
    VectorXd q = VectorXd::Zero(q_bar.size());
    for (const auto& rule : rules.rules) {
        const VectorXd z = rule.prepare(raw_inputs[rule.bus]);
        q(static_cast<Index>(rule.bus)) = rule.evaluate(z);
    }
    return clamp_dispatch(q, q_bar, std::move(source));
}

namespace {

// Box rows for q plus the epigraph of the deviation cost; returns the slack
// variables whose sum equals the cost (||v|| stands in for delta_s).
std::vector<Index> add_dispatch_rows(detail::ProgramBuilder& pb, Index q0, const std::vector<Index>& active,
                                     const VectorXd& y, const VectorXd& q_bar, const Sensitivities& sens,
                                     const CostSpec& cost) {
    const Index N = y.size();
    std::vector<Affine> box;
    for (std::size_t k = 0; k < active.size(); ++k) {
        box.push_back(Affine(q_bar(active[k])).add(q0 + static_cast<Index>(k), -1.0));
        box.push_back(Affine(q_bar(active[k])).add(q0 + static_cast<Index>(k), 1.0));
    }
    pb.add_cone(conic::ConeKind::nonnegative, std::move(box));

    auto deviation = [&](Index m) {
        Affine v(y(m));
        for (std::size_t k = 0; k < active.size(); ++k) v.add(q0 + static_cast<Index>(k), sens.X(m, active[k]));
        return v;
    };
    std::vector<Index> cost_vars;
    switch (cost.objective) {
        case Objective::delta_tau: {
            const Index d = pb.add_var("d");
            cost_vars.push_back(d);
            pb.add_nonneg(Affine().add(d, 1.0));
            std::vector<Affine> rows{Affine(cost.tau).add(d, 1.0)};
            for (Index m = 0; m < N; ++m) rows.push_back(deviation(m));
            pb.add_cone(conic::ConeKind::soc, std::move(rows));
            break;
        }
        case Objective::delta_eps: {
            const Index d0 = pb.add_vars(N, "d");
            std::vector<Affine> rows;
            for (Index m = 0; m < N; ++m) {
                cost_vars.push_back(d0 + m);
                rows.push_back(Affine().add(d0 + m, 1.0));
                Affine up = deviation(m);
                up.constant = cost.eps - up.constant;
                for (auto& t : up.terms) t.second = -t.second;
                up.add(d0 + m, 1.0);
                rows.push_back(std::move(up));
                Affine lo = deviation(m);
                lo.constant += cost.eps;
                lo.add(d0 + m, 1.0);
                rows.push_back(std::move(lo));
            }
            pb.add_cone(conic::ConeKind::nonnegative, std::move(rows));
            break;
        }
        case Objective::delta_s: {
            const Index t = pb.add_var("t");
            cost_vars.push_back(t);
            std::vector<Affine> rows{Affine().add(t, 1.0)};
            for (Index m = 0; m < N; ++m) rows.push_back(deviation(m));
            pb.add_cone(conic::ConeKind::soc, std::move(rows));
            break;
        }
    }
    return cost_vars;
}

conic::ConeSolution solve_dispatch(const detail::ProgramBuilder& pb, const conic::SolveOptions& options) {
    conic::ConeSolution sol = conic::solve(pb.build(), options);
    if (sol.status != conic::Status::optimal)
        throw SolverError(std::string("dispatch solve ended with status ") + conic::to_string(sol.status),
                          sol.primal_res, sol.dual_res, sol.gap);
    return sol;
}

double dispatch_cost(const CostSpec& cost, const VectorXd& v) {
    return cost.objective == Objective::delta_s ? v.norm() : deviation_cost(cost.objective, cost.tau, cost.eps, v);
}

}  // namespace

Dispatch opf_dispatch(const VectorXd& y, const VectorXd& q_bar, const Sensitivities& sens, const CostSpec& cost,
                      const conic::SolveOptions& options, std::string source) {
    const Index N = y.size();
    if (q_bar.size() != N || sens.X.rows() != N || sens.X.cols() != N)
        throw DimensionError("opf_dispatch: inconsistent dimensions");
    if (cost.objective == Objective::delta_tau && !(cost.tau > 0)) throw InvalidArgument("tau must be positive");
    if (cost.objective == Objective::delta_eps && !(cost.eps > 0)) throw InvalidArgument("eps must be positive");

    std::vector<Index> active;
    for (Index n = 0; n < N; ++n)
        if (q_bar(n) > 0) active.push_back(n);
    if (active.empty()) return clamp_dispatch(VectorXd::Zero(N), q_bar, std::move(source));
    const auto A = static_cast<Index>(active.size());
    auto expand = [&](const VectorXd& x, Index q0) {
        VectorXd q = VectorXd::Zero(N);
        for (Index k = 0; k < A; ++k) q(active[static_cast<std::size_t>(k)]) = x(q0 + k);
        return clamp_dispatch(q, q_bar, "").q_g;
    };

    // delta_s is minimized as ||v|| (same minimizer): the squared form only
    // locates q to the square root of the solver gap. Per-unit costs are tiny,
    // so everything is scaled by the no-control cost.
    const double scale = 1.0 / std::max(dispatch_cost(cost, y), 1e-6);

    // Stage 1: the optimal cost.
    VectorXd q1;
    {
        detail::ProgramBuilder pb;
        const Index q0 = pb.add_vars(A, "q");
        for (Index v : add_dispatch_rows(pb, q0, active, y, q_bar, sens, cost)) pb.set_cost(v, scale);
        q1 = expand(solve_dispatch(pb, options).x, q0);
    }
    // X restricted to the inverter columns is injective, so delta_s and a
    // positive delta_tau have a unique minimizer. Otherwise ties are possible
    // (the dead zone of delta_tau, the polyhedral delta_eps).
    const double best = dispatch_cost(cost, sens.X * q1 + y) * scale;
    if (cost.objective == Objective::delta_s || (cost.objective == Objective::delta_tau && best > 1e-6))
        return clamp_dispatch(q1, q_bar, std::move(source));

    // Stage 2: minimum-norm point among (near-)minimizers. This is the limit
    // of adding a vanishing ||q||^2 term, which the solver cannot resolve
    // directly at per-unit cost scales.
    detail::ProgramBuilder pb;
    const Index q0 = pb.add_vars(A, "q");
    const Index r = pb.add_var("norm");
    pb.set_cost(r, 1.0);
    Affine budget(best + 1e-7);
    for (Index v : add_dispatch_rows(pb, q0, active, y, q_bar, sens, cost)) budget.add(v, -scale);
    pb.add_nonneg(std::move(budget));
    std::vector<Affine> norm_rows{Affine().add(r, 1.0)};
    for (Index k = 0; k < A; ++k) norm_rows.push_back(Affine().add(q0 + k, 1.0));
    pb.add_cone(conic::ConeKind::soc, std::move(norm_rows));
    VectorXd q2;
    try {
        q2 = expand(solve_dispatch(pb, options).x, q0);
    } catch (const SolverError&) {
        return clamp_dispatch(q1, q_bar, std::move(source));  // the tie-break is best effort
    }
    return clamp_dispatch(q2, q_bar, std::move(source));
}

void WattVarCurve::validate() const {
    if (!(p1 >= 0) || !(p2 > p1)) throw InvalidArgument("watt-var curve needs 0 <= p1 < p2");
    if (!(oversize >= 1)) throw InvalidArgument("watt-var oversize must be at least 1");
}

double watt_var(double p_g, double s_bar, const WattVarCurve& curve) {
    const double p = std::max(p_g, 0.0);
    const double q_bar = std::sqrt(std::max(s_bar * s_bar - p * p, 0.0));
    const double rated = s_bar / curve.oversize;
    if (p <= curve.p1 * rated) return q_bar;
    if (p >= curve.p2 * rated) return 0.0;
    const double frac = (curve.p2 * rated - p) / ((curve.p2 - curve.p1) * rated);
    return std::clamp(frac, 0.0, 1.0) * q_bar;
}

TwoStepResult two_step_train(const ScenarioSet& scen, const Sensitivities& sens, const TrainConfig& cfg) {
    cfg.validate();
    if (!cfg.mu) throw InvalidArgument("two_step_train needs a fixed mu");
    const auto S = static_cast<Index>(scen.scenarios());
    const auto N = static_cast<Index>(scen.buses());
    const CostSpec cost = CostSpec::of(cfg);

    TwoStepResult out;
    out.q_opf = MatrixXd::Zero(N, S);
    for (Index s = 0; s < S; ++s)
        out.q_opf.col(s) = opf_dispatch(scen.y.col(s), scen.q_bar.col(s), sens, cost).q_g;

    out.rules.buses = scen.buses();
    out.rules.layout = scen.layout;
    out.rules.meta.objective = cfg.objective;
    out.rules.meta.mu = *cfg.mu;
    out.rules.meta.tau = cfg.tau;
    out.rules.meta.eps = cfg.eps;
    if (!scen.timestamps.empty())
        out.rules.meta.window =
            std::to_string(scen.timestamps.front()) + "-" + std::to_string(scen.timestamps.back());

    out.fitted = MatrixXd::Zero(N, S);
    for (std::size_t n : inverter_buses(scen)) {
        const auto ni = static_cast<Index>(n);
        const RidgeFit fit = kernel_ridge(cfg.kernel, scen.z[n], out.q_opf.row(ni).transpose(), *cfg.mu, cfg.solver);
        InverterRule rule;
        rule.bus = n;
        rule.kernel = cfg.kernel;
        rule.a = fit.a;
        rule.b = fit.b;
        rule.z_train = scen.z[n];
        for (Index s = 0; s < S; ++s) rule.scenario_ids.push_back(static_cast<int>(s));
        rule.norm = scen.norm_stats.at(n);
        out.fitted.row(ni) = fit.fitted.transpose();
        out.fit_residual = std::max(out.fit_residual, (fit.fitted - out.q_opf.row(ni).transpose()).cwiseAbs().maxCoeff());
        out.rules.rules.push_back(std::move(rule));
    }
    out.feasible.assign(static_cast<std::size_t>(S), true);
    for (Index s = 0; s < S; ++s)
        out.feasible[static_cast<std::size_t>(s)] =
            (out.fitted.col(s).cwiseAbs() - scen.q_bar.col(s)).maxCoeff() <= 1e-12;
    return out;
}

void write_dispatch_csv(std::ostream& out, const std::vector<DispatchRecord>& records) {
    out << "t,bus,q_g,clipped,source\n";
    char buf[64];
    for (const auto& r : records)
        for (Index n = 0; n < r.dispatch.q_g.size(); ++n) {
            std::snprintf(buf, sizeof buf, "%.17g", r.dispatch.q_g(n));
            out << r.t << ',' << n + 1 << ',' << buf << ',' << (r.dispatch.clipped[static_cast<std::size_t>(n)] ? 1 : 0)
                << ',' << r.dispatch.source << '\n';
        }
}

}  // namespace voltkernel
