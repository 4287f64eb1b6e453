#pragma once

#include "voltkernel/conic.hpp"
#include "voltkernel/feeder.hpp"
#include "voltkernel/trainer.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace voltkernel {

struct Dispatch {
    Eigen::VectorXd q_g;        // length N, reactive injections (pu)
    std::vector<bool> clipped;  // projection onto [-q_bar, q_bar] was active
    std::string source;         // controller id
};

/// Clamps q into [-q_bar, q_bar] and flags the entries that moved.
Dispatch clamp_dispatch(const Eigen::VectorXd& q, const Eigen::VectorXd& q_bar, std::string source);

/// Rule outputs for raw (unnormalized) per-bus inputs, clamped to q_bar.
/// `raw_inputs` has one entry per feeder bus; only buses with a rule are read.
Dispatch eval_rules(const RuleSet& rules, const std::vector<Eigen::VectorXd>& raw_inputs,
                    const Eigen::VectorXd& q_bar, std::string source = "rules");

struct CostSpec {
    Objective objective = Objective::delta_s;
    double tau = 1e-3;
    double eps = 1e-3;

    static CostSpec of(const TrainConfig& c) { return {c.objective, c.tau, c.eps}; }
};

/// Dispatch programs are tiny, so they are solved well past the nominal tolerance.
inline constexpr conic::SolveOptions kDispatchSolve{.tol = 1e-7, .polish_tol = 1e-10};

/// Per-time-step optimal dispatch: minimize cost(X q + y) over |q| <= q_bar.
/// Ties resolve to the minimum-norm minimizer (solved as a second stage over
/// points within 1e-7 of the optimal cost, relative to the no-control cost).
Dispatch opf_dispatch(const Eigen::VectorXd& y, const Eigen::VectorXd& q_bar, const Sensitivities& sens,
                      const CostSpec& cost, const conic::SolveOptions& options = kDispatchSolve, std::string source = "opf");

struct WattVarCurve {
    double p1 = 0.5;        // plateau ends at p1 * p_rated
    double p2 = 1.0;        // output reaches zero at p2 * p_rated
    double oversize = 1.1;  // p_rated = s_bar / oversize

    void validate() const;
};

/// q_bar(p) for p <= p1 p_rated, falling linearly (as a fraction of q_bar(p))
/// to zero at p2 p_rated, zero beyond.
double watt_var(double p_g, double s_bar, const WattVarCurve& curve = {});

struct TwoStepResult {
    RuleSet rules;
    Eigen::MatrixXd q_opf;   // N x S per-scenario optimal dispatch
    Eigen::MatrixXd fitted;  // N x S unclamped rule outputs on the training inputs
    std::vector<bool> feasible;  // per scenario: every fitted output within its limit
    double fit_residual = 0.0;   // max |fitted - q_opf| over inverter rows
};

/// The non-consolidated competitor: per-scenario optimal dispatch, then a
/// kernel ridge fit per inverter with the same kernel and mu (cfg.mu required).
TwoStepResult two_step_train(const ScenarioSet& scen, const Sensitivities& sens, const TrainConfig& cfg);

struct DispatchRecord {
    int t = 0;
    Dispatch dispatch;
};

/// `t,bus,q_g,clipped,source`, bus 1-based, one row per bus and step.
void write_dispatch_csv(std::ostream& out, const std::vector<DispatchRecord>& records);

}  // namespace voltkernel
