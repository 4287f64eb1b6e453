#pragma once

#include "voltkernel/conic.hpp"
#include "voltkernel/feeder.hpp"
#include "voltkernel/kernel.hpp"
#include "voltkernel/scenario.hpp"

#include <Eigen/Dense>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace voltkernel {

enum class Objective { delta_tau, delta_eps, delta_s };

const char* to_string(Objective o) noexcept;
Objective parse_objective(const std::string& s);

struct TrainConfig {
    Objective objective = Objective::delta_tau;
    double tau = 1e-3;
    double eps = 1e-3;
    /// Regularization weight; when unset, train() picks it by cross
    /// validation over mu_grid (and gamma_grid for gaussian kernels).
    std::optional<double> mu;
    std::vector<double> mu_grid = {1e-5, 1e-4, 1e-3, 1e-2};
    std::vector<double> gamma_grid;
    KernelSpec kernel;
    bool drop_intercept = false;  // inverter selection: inputs get a leading 1
    int cv_folds = 5;
    double zero_tol = 1e-6;
    double feas_tol = 1e-6;
    // Nominal tolerance 1e-7; the extra accuracy keeps coefficients of
    // scenarios strictly inside the dead zone at numerical zero.
    conic::SolveOptions solver{.tol = 1e-7, .polish_tol = 1e-11};

    void validate() const;
};

/// Voltage-regulation cost of the deviation vector v = X q + y.
///   delta_tau: max(||v|| - tau, 0);  delta_eps: sum max(|v_n| - eps, 0);  delta_s: ||v||^2
double deviation_cost(Objective o, double tau, double eps, const Eigen::VectorXd& v);
inline double deviation_cost(const TrainConfig& c, const Eigen::VectorXd& v) {
    return deviation_cost(c.objective, c.tau, c.eps, v);
}

struct InverterRule {
    std::size_t bus = 0;  // 0-based column (feeder bus bus + 1)
    KernelSpec kernel;
    Eigen::VectorXd a;
    std::optional<double> b;  // absent in inverter-selection mode
    bool augmented = false;   // inputs carry a leading constant 1
    Eigen::MatrixXd z_train;  // stored inputs, one column per entry of a
    std::vector<int> scenario_ids;
    NormStats norm;

    /// Kernel expansion plus intercept at an already-normalized (and, if
    /// needed, augmented) input. Zero coefficients are skipped; a training
    /// input reproduces the jittered Gram row exactly.
    double evaluate(const Eigen::VectorXd& z) const;
    /// Normalizes and augments a raw measurement vector.
    Eigen::VectorXd prepare(const Eigen::VectorXd& raw) const;
};

struct RuleSetMeta {
    Objective objective = Objective::delta_tau;
    double mu = 0.0;
    double tau = 0.0;
    double eps = 0.0;
    std::string window;  // "first-last" training minutes
    double objective_value = 0.0;
    double primal_res = 0.0;
    double dual_res = 0.0;
    double gap = 0.0;
    int iterations = 0;
};

struct RuleSet {
    std::size_t buses = 0;  // feeder size N
    InputLayout layout;
    std::vector<InverterRule> rules;
    RuleSetMeta meta;

    const InverterRule* find(std::size_t bus) const;
    /// Zeroes coefficients with |a| <= zero_tol and drops stored inputs
    /// that no longer carry a coefficient.
    RuleSet pruned(double zero_tol) const;
    /// Number of values downloaded to inverters: nonzero a entries plus one
    /// intercept per rule that has one.
    std::size_t comm_count() const;
};

std::string ruleset_to_json(const RuleSet& r);
RuleSet ruleset_from_json(const std::string& text);
void save_ruleset(const std::filesystem::path& path, const RuleSet& r);
RuleSet load_ruleset(const std::filesystem::path& path);

/// Buses (0-based) with a nonzero inverter rating.
std::vector<std::size_t> inverter_buses(const ScenarioSet& scen);

/// Variable layout of an assembled training program.
struct TrainingProgram {
    conic::ConeProgram program;
    std::vector<std::size_t> inverters;
    std::vector<Eigen::Index> a_offset;  // per inverter, S entries
    std::vector<Eigen::Index> b_index;   // per inverter, -1 without intercept
    std::vector<Eigen::Index> q_offset;  // per inverter, S entries
    Eigen::Index d_offset = 0;           // S (or N*S for delta_eps) slacks
    std::vector<Eigen::Index> gamma_index;  // per inverter, -1 when mu == 0
    std::size_t scenarios = 0;
};

/// Inputs as seen by the trainer (augmented when drop_intercept is set).
std::vector<Eigen::MatrixXd> training_inputs(const ScenarioSet& scen, const std::vector<std::size_t>& inverters,
                                             bool augment);

TrainingProgram assemble(const ScenarioSet& scen, const GramSet& grams, const Sensitivities& sens,
                         const TrainConfig& cfg, double mu);

/// Builds grams, assembles, solves and extracts the rules. `cfg.mu` must be
/// set unless cross validation is wanted. Throws SolverError when the solve
/// is not certified optimal or the rules violate the training limits.
RuleSet train(const ScenarioSet& scen, const Sensitivities& sens, const TrainConfig& cfg);

/// One fixed-mu training solve with everything needed to inspect it.
struct TrainingSolve {
    RuleSet rules;
    TrainingProgram program;
    conic::ConeSolution solution;
    /// Multipliers of the coupling rows q = K a + b, N x S (zero rows for
    /// buses without an inverter).
    Eigen::MatrixXd coupling_duals;
};

/// Requires cfg.mu. Throws like train().
TrainingSolve solve_training(const ScenarioSet& scen, const Sensitivities& sens, const TrainConfig& cfg);

/// Unclamped rule outputs over the training scenarios: N x S, zero rows for
/// buses without a rule.
Eigen::MatrixXd training_dispatch(const RuleSet& rules, const ScenarioSet& scen);

/// (1/S) sum_s cost(X q_s + y_s) for a dispatch matrix Q (N x S).
double average_cost(const TrainConfig& cfg, const Sensitivities& sens, const ScenarioSet& scen,
                    const Eigen::MatrixXd& Q);

struct CvResult {
    TrainConfig best;
    std::vector<double> scores;  // per grid entry
    std::size_t best_index = 0;
};

/// k-fold cross validation: fold of scenario s is s mod cv_folds. Held-out
/// scenarios are scored with the clamped rules and each entry's own cost.
/// Ties keep the earlier grid entry.
CvResult cross_validate(const ScenarioSet& scen, const Sensitivities& sens, const std::vector<TrainConfig>& grid);

/// Grid implied by an unset mu: mu_grid x gamma_grid (gaussian only).
std::vector<TrainConfig> default_grid(const TrainConfig& cfg);

struct SparsityReport {
    double zero_tol = 1e-6;
    double frac_nonzero_overall = 0.0;
    Eigen::VectorXd frac_nonzero_per_inverter;  // length N, zero without a rule
    std::set<std::size_t> inactive_inverters;   // buses whose a is identically zero
    std::set<int> support_scenarios;            // scenario ids with any nonzero
};

SparsityReport sparsity_report(const RuleSet& rules, double zero_tol = 1e-6);

}  // namespace voltkernel
