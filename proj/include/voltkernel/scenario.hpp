#pragma once

#include "voltkernel/feeder.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace voltkernel {

/// Minute-resolution load and solar series. Row t of each matrix is minute
/// timestamps[t]; column n is bus n + 1 of the feeder.
struct ProfileSet {
    std::vector<int> timestamps;
    Eigen::MatrixXd p_c;  // active load, >= 0
    Eigen::MatrixXd q_c;  // reactive load, lagging positive
    Eigen::MatrixXd p_g;  // solar generation, >= 0
    Eigen::VectorXd s_bar;  // inverter ratings, 0 without solar

    std::size_t horizon() const { return timestamps.size(); }
    std::size_t buses() const { return static_cast<std::size_t>(s_bar.size()); }
    void validate() const;
    /// Net active injection p_g - p_c at row t.
    Eigen::VectorXd net_p(std::size_t t) const;
    /// Reactive headroom sqrt(max(s_bar^2 - p_g^2, 0)) at row t.
    Eigen::VectorXd q_bar(std::size_t t) const;
};

struct GeneratorConfig {
    int horizon_min = 480;
    int start_minute = 480;  // minute of day of the first row (8:00)
    double penetration = 0.75;
    double peak_scale = 1.5;
    double pf_lo = 0.9;
    double pf_hi = 0.95;
    double oversize = 1.1;
    double noise = 0.05;       // per-minute relative volatility, at most 0.15
    double noise_corr = 0.95;  // AR(1) coefficient of the noise processes
    // Solar capacity relative to the bus load peak, drawn per bus.
    double solar_ratio_lo = 1.5;
    double solar_ratio_hi = 3.0;
};

/// Buses 1..N (returned 0-based) that carry solar. For penetration p <= 1/2
/// bus n is chosen when floor(n p) > floor((n - 1) p), i.e. every 1/p-th bus;
/// for p > 1/2 the buses chosen for 1 - p are excluded.
std::vector<bool> solar_buses(std::size_t n, double penetration);

ProfileSet synthesize_profiles(const FeederModel& f, const GeneratorConfig& cfg, std::uint64_t seed);

/// Long-format CSV `t,bus,p_c,q_c,p_g` with buses numbered 1..N. Ratings are
/// not stored; reading derives s_bar = oversize * max_t p_g per bus.
void write_profiles_csv(const std::filesystem::path& path, const ProfileSet& p);
ProfileSet read_profiles_csv(const std::filesystem::path& path, double oversize = 1.1);

/// Which measurements enter each inverter's input vector.
struct InputLayout {
    struct Remote {
        std::size_t line = 0;
        std::vector<std::size_t> downstream;  // 0-based bus columns
    };
    bool local = true;  // [q_bar, p_c - p_g, q_c] of the inverter's own bus
    std::vector<Remote> remote;

    std::size_t size() const { return (local ? 3 : 0) + remote.size(); }
    std::vector<std::string> names() const;
};

/// Resolves remote channels (active flows on the given lines). Throws
/// InvalidArgument for a line that does not exist.
InputLayout make_layout(const FeederModel& f, const std::vector<std::size_t>& remote_lines, bool local = true);

/// Raw (unnormalized) input of bus column n at profile row t.
Eigen::VectorXd raw_input(const ProfileSet& p, std::size_t t, std::size_t n, const InputLayout& layout);

struct NormStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;

    static NormStats identity(std::size_t m);
    Eigen::VectorXd apply(const Eigen::VectorXd& raw) const;
};

constexpr double kStdFloor = 1e-6;

/// Half-open range [begin, end) of profile rows.
struct Window {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end > begin ? end - begin : 0; }
};

/// Training scenarios drawn from a profile window. Matrices are N x S with
/// column s the scenario at row window.begin + s.
struct ScenarioSet {
    std::vector<int> timestamps;
    Eigen::MatrixXd y;      // R (p_g - p_c) - X q_c
    Eigen::MatrixXd q_bar;  // reactive limits
    Eigen::MatrixXd p_c, q_c, p_g;
    Eigen::VectorXd s_bar;
    std::vector<Eigen::MatrixXd> z;  // per bus: M x S inputs (normalized when enabled)
    std::vector<NormStats> norm_stats;
    InputLayout layout;
    bool normalized = false;

    std::size_t scenarios() const { return timestamps.size(); }
    std::size_t buses() const { return static_cast<std::size_t>(y.rows()); }
    /// Restriction to the listed scenario columns (order preserved).
    ScenarioSet subset(const std::vector<std::size_t>& columns) const;
};

ScenarioSet build_scenarios(const ProfileSet& profiles, const Window& window, const Sensitivities& sens,
                            const InputLayout& layout, bool normalize);

/// Prepends a constant 1 to z.
Eigen::VectorXd augment_input(const Eigen::VectorXd& z);

}  // namespace voltkernel
