#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace voltkernel {

struct Bus {
    double p_nom = 0.0;  // nominal active load, pu
    double q_nom = 0.0;  // nominal reactive load, pu
};

struct Line {
    std::size_t from = 0;
    std::size_t to = 0;
    double r = 0.0;  // pu
    double x = 0.0;  // pu
};

/// Radial single-phase feeder. Bus 0 is the substation; buses 1..N carry
/// loads and possibly inverters. The constructor validates topology and
/// orients every line away from the substation.
class FeederModel {
public:
    FeederModel(std::vector<Bus> buses, std::vector<Line> lines, double v0 = 1.0, double s_base = 1.0,
                double v_base = 1.0);

    /// Number of non-substation buses N.
    std::size_t size() const { return buses_.size() - 1; }

    const std::vector<Bus>& buses() const { return buses_; }
    /// Lines in input order, oriented so that `from` is the parent.
    const std::vector<Line>& lines() const { return lines_; }
    double v0() const { return v0_; }
    double s_base() const { return s_base_; }
    double v_base() const { return v_base_; }

    std::size_t parent(std::size_t bus) const { return parent_.at(bus); }
    /// Index (into lines()) of the line feeding `bus`; bus must be >= 1.
    std::size_t feeding_line(std::size_t bus) const { return feeding_line_.at(bus); }
    const std::vector<std::size_t>& children(std::size_t bus) const { return children_.at(bus); }
    /// Buses ordered so that every parent precedes its children (starts at 0).
    const std::vector<std::size_t>& order() const { return order_; }
    /// Buses 1..N downstream of (and including) the to-bus of `line`.
    std::vector<std::size_t> downstream_of_line(std::size_t line) const;

    /// Nominal loads of buses 1..N.
    Eigen::VectorXd p_nom() const;
    Eigen::VectorXd q_nom() const;

private:
    std::vector<Bus> buses_;
    std::vector<Line> lines_;
    double v0_;
    double s_base_;
    double v_base_;
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> feeding_line_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::size_t> order_;
};

/// Loads a feeder from a JSON document (extension .json) or from a
/// directory holding `lines.csv` (from,to,r_pu,x_pu) and `buses.csv`
/// (bus,p_nom,q_nom).
FeederModel load_feeder(const std::filesystem::path& path);
FeederModel load_feeder_csv(const std::filesystem::path& lines_csv, const std::filesystem::path& buses_csv);
FeederModel parse_feeder_json(const std::string& text);
std::string feeder_to_json(const FeederModel& f);

/// Linearized voltage model v ~ R p + X q + v0 1 around the flat profile.
struct Sensitivities {
    Eigen::MatrixXd R;
    Eigen::MatrixXd X;
    double v0 = 1.0;
};

/// R(n,m) and X(n,m) are the resistance and reactance shared by the
/// substation paths of buses n and m, divided by v0.
Sensitivities build_sensitivities(const FeederModel& f);

struct VoltageProfile {
    Eigen::VectorXd v;  // |V| of buses 1..N, pu
    bool converged = false;
    int iterations = 0;
    /// Max voltage change per sweep, one entry per iteration.
    std::vector<double> change_history;
};

struct PowerFlowOptions {
    double tol = 1e-10;
    int max_iters = 100;
};

/// Backward/forward sweep with constant-power injections p + jq (pu,
/// generation positive) at buses 1..N. Non-convergence is reported through
/// `converged`, never thrown.
VoltageProfile ac_power_flow(const FeederModel& f, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                             const PowerFlowOptions& options = {});

}  // namespace voltkernel
