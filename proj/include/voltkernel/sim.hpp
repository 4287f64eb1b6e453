#pragma once

#include "voltkernel/control.hpp"
#include "voltkernel/feeder.hpp"
#include "voltkernel/scenario.hpp"
#include "voltkernel/trainer.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace voltkernel {

// NC: no reactive support. C1/C2: per-minute optimal dispatch (C2 on stale
// data). C3: Watt-VAR. C4-C7: learned rules (linear/gaussian x tau/eps).
// R2: two-step competitor (per-scenario dispatch, then kernel ridge).
enum class ControllerId { NC, C1, C2, C3, C4, C5, C6, C7, R2 };

const char* to_string(ControllerId id) noexcept;
ControllerId parse_controller(const std::string& s);
bool is_learned(ControllerId id) noexcept;

struct SimConfig {
    std::size_t train_window = 30;  // trailing minutes used as scenarios
    std::size_t apply_window = 30;  // minutes a rule set stays in force
    /// Profile rows to run over; 0 = through the end. The first rules are
    /// applied at row train_window.
    std::size_t horizon = 0;
    std::vector<ControllerId> controllers = {ControllerId::C1, ControllerId::C2, ControllerId::C3, ControllerId::C4,
                                             ControllerId::C5};
    std::vector<std::size_t> remote_lines;
    bool local_inputs = true;
    bool normalize = true;

    /// Shared training settings; objective and kernel kind are set per
    /// controller. An unset mu is chosen by cross validation on the first
    /// window (with gamma for gaussian kernels) and then held fixed.
    TrainConfig train;
    double linear_jitter = 1e-3;
    double gaussian_gamma = 3.0;  // used when mu is given
    double gaussian_jitter = 1e-3;
    bool retune_each_window = false;

    /// Cost minimized by C1/C2 and reported per minute for every controller.
    CostSpec dispatch_cost{Objective::delta_tau, 1e-3, 1e-3};
    int c2_lag = 2;
    WattVarCurve watt_var;
    ControllerId r2_like = ControllerId::C5;  // R2 reuses this controller's kernel, cost and mu

    double band = 0.03;  // violation threshold on |v - v0|
    bool log_dispatch = false;

    void validate() const;
};

/// Per-controller minute log before aggregation.
struct ControllerLog {
    ControllerId id = ControllerId::NC;
    std::vector<int> minutes;             // profile timestamps of evaluated minutes
    std::vector<Eigen::VectorXd> dv;      // |v_AC - v0| per bus, one entry per minute
    std::vector<double> ldf_cost;         // dispatch cost under the linear model
};

struct WindowStats {
    std::size_t index = 0;
    int first_minute = 0;  // first applied minute
    bool ok = true;
    std::string error;
    double objective = 0.0;       // training objective value
    double train_avg_dv = 0.0;    // mean |X q + y| over training scenarios
    double frac_nonzero = 0.0;
    std::size_t comm_count = 0;   // values downloaded for this window
    double mu = 0.0;
    double gamma = 0.0;
};

struct ControllerReport {
    ControllerId id = ControllerId::NC;
    Eigen::VectorXd avg_dv;  // per bus, over evaluated minutes
    Eigen::VectorXd max_dv;
    double avg_abs_dv = 0.0;      // over buses and minutes
    double max_abs_dv = 0.0;
    double time_avg_max_dv = 0.0;  // mean over minutes of max over buses
    double avg_ldf_cost = 0.0;
    std::size_t violations = 0;    // (minute, bus) pairs beyond the band
    std::size_t minutes = 0;
    std::vector<int> minute_t;
    std::vector<double> ldf_cost;  // per evaluated minute
    std::vector<double> max_dv_t;  // per evaluated minute
    std::vector<WindowStats> windows;  // learned controllers only
};

struct SimReport {
    std::size_t buses = 0;
    double band = 0.03;
    std::vector<ControllerReport> controllers;
    std::vector<DispatchRecord> dispatch_log;

    const ControllerReport* find(ControllerId id) const;
};

/// Deterministic aggregation; controllers with an empty log are omitted.
SimReport metrics(const std::vector<ControllerLog>& logs, std::size_t buses, double band);

SimReport run_rolling(const FeederModel& f, const ProfileSet& profiles, const SimConfig& cfg);

enum class SweepParam { tau, eps, mu };
const char* to_string(SweepParam p) noexcept;
SweepParam parse_sweep_param(const std::string& s);

struct SweepRow {
    double value = 0.0;
    double avg_dv = 0.0;        // AC-evaluated over the horizon
    double frac_nonzero = 0.0;  // mean over windows
    double train_avg_dv = 0.0;  // mean over windows
    double comm_count = 0.0;    // mean over windows
};

/// One rolling run of `controller` per grid value.
std::vector<SweepRow> sweep_tradeoff(const FeederModel& f, const ProfileSet& profiles, const SimConfig& cfg,
                                     ControllerId controller, SweepParam param, const std::vector<double>& grid);

std::string report_to_json(const SimReport& r);
/// `controller,bus,avg_dv,max_dv`
void write_bus_csv(std::ostream& out, const SimReport& r);
/// `controller,window,objective,frac_nonzero,comm_count`
void write_window_csv(std::ostream& out, const SimReport& r);
/// `param,value,avg_dv,frac_nonzero,train_avg_dv,comm_count`
void write_sweep_csv(std::ostream& out, SweepParam param, const std::vector<SweepRow>& rows);

}  // namespace voltkernel
