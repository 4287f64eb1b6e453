#include "voltkernel/scenario.hpp"

#include "voltkernel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace voltkernel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void ProfileSet::validate() const {
    const auto T = static_cast<Eigen::Index>(timestamps.size());
    const auto N = s_bar.size();
    if (T < 1) throw DimensionError("profile set is empty");
    for (const MatrixXd* m : {&p_c, &q_c, &p_g})
        if (m->rows() != T || m->cols() != N) throw DimensionError("profile matrices must be T x N");
    if (!p_c.allFinite() || !q_c.allFinite() || !p_g.allFinite() || !s_bar.allFinite())
        throw InvalidArgument("profiles contain non-finite values");
    if ((p_c.array() < 0).any()) throw InvalidArgument("negative active load");
    if ((p_g.array() < 0).any()) throw InvalidArgument("negative solar generation");
    if ((s_bar.array() < 0).any()) throw InvalidArgument("negative inverter rating");
}

VectorXd ProfileSet::net_p(std::size_t t) const {
    return (p_g.row(static_cast<Eigen::Index>(t)) - p_c.row(static_cast<Eigen::Index>(t))).transpose();
}

VectorXd ProfileSet::q_bar(std::size_t t) const {
    const VectorXd pg = p_g.row(static_cast<Eigen::Index>(t)).transpose();
    return (s_bar.array().square() - pg.array().square()).max(0.0).sqrt().matrix();
}

std::vector<bool> solar_buses(std::size_t n, double penetration) {
    if (!(penetration >= 0.0 && penetration <= 1.0)) throw InvalidArgument("penetration must lie in [0, 1]");
    const bool invert = penetration > 0.5;
    const double p = invert ? 1.0 - penetration : penetration;
    std::vector<bool> out(n);
    for (std::size_t k = 1; k <= n; ++k) {
        // Small guard so that e.g. 0.25 * 4 lands on 1 despite rounding.
        const bool hit = std::floor(k * p + 1e-9) > std::floor((k - 1) * p + 1e-9);
        out[k - 1] = hit != invert;
    }
    return out;
}

ProfileSet synthesize_profiles(const FeederModel& f, const GeneratorConfig& cfg, std::uint64_t seed) {
    if (cfg.horizon_min < 2) throw InvalidArgument("horizon must span at least two minutes");
    if (!(cfg.pf_lo > 0 && cfg.pf_lo <= cfg.pf_hi && cfg.pf_hi <= 1)) throw InvalidArgument("bad power factor range");
    if (!(cfg.noise >= 0 && cfg.noise <= 0.15)) throw InvalidArgument("noise must lie in [0, 0.15]");
    if (!(cfg.noise_corr >= 0 && cfg.noise_corr < 1)) throw InvalidArgument("noise_corr must lie in [0, 1)");
    if (!(cfg.peak_scale > 0) || !(cfg.oversize >= 1)) throw InvalidArgument("bad scaling parameters");
    if (!(cfg.solar_ratio_lo >= 0 && cfg.solar_ratio_lo <= cfg.solar_ratio_hi))
        throw InvalidArgument("bad solar ratio range");
    const std::vector<bool> solar = solar_buses(f.size(), cfg.penetration);

    const auto T = static_cast<Eigen::Index>(cfg.horizon_min);
    const auto N = static_cast<Eigen::Index>(f.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    ProfileSet out;
    out.timestamps.resize(cfg.horizon_min);
    for (int t = 0; t < cfg.horizon_min; ++t) out.timestamps[t] = cfg.start_minute + t;
    out.p_c.resize(T, N);
    out.q_c.resize(T, N);
    out.p_g = MatrixXd::Zero(T, N);
    out.s_bar = VectorXd::Zero(N);

    const double innov = std::sqrt(1.0 - cfg.noise_corr * cfg.noise_corr);
    constexpr double pi = std::numbers::pi;

    // Cloud cover shared by all buses (plus a local part below).
    std::vector<double> cloud(cfg.horizon_min);
    double c = 0.0;
    for (auto& v : cloud) {
        c = cfg.noise_corr * c + 2.0 * cfg.noise * innov * gauss(rng);
        v = c;
    }

    const VectorXd p_nom = f.p_nom();
    for (Eigen::Index n = 0; n < N; ++n) {
        const double pf = uniform(cfg.pf_lo, cfg.pf_hi);
        const double evening_peak = uniform(17.0 * 60, 20.0 * 60);
        const double swing = uniform(0.25, 0.45);
        const double ratio = uniform(cfg.solar_ratio_lo, cfg.solar_ratio_hi);
        VectorXd load(T);
        double e = 0.0;
        for (Eigen::Index t = 0; t < T; ++t) {
            const double minute = out.timestamps[t];
            e = cfg.noise_corr * e + cfg.noise * innov * gauss(rng);
            const double base = 1.0 + swing * std::cos(2.0 * pi * (minute - evening_peak) / 1440.0);
            load(t) = std::max(0.0, base * (1.0 + e));
        }
        const double peak = load.maxCoeff();
        const double scale = peak > 0 ? cfg.peak_scale * std::max(p_nom(n), 0.0) / peak : 0.0;
        out.p_c.col(n) = load * scale;
        out.q_c.col(n) = out.p_c.col(n) * std::tan(std::acos(pf));

        if (!solar[static_cast<std::size_t>(n)]) continue;
        double local = 0.0;
        for (Eigen::Index t = 0; t < T; ++t) {
            const double minute = out.timestamps[t];
            local = cfg.noise_corr * local + cfg.noise * innov * gauss(rng);
            const double phase = (minute - 6.0 * 60) / (13.0 * 60);
            const double clear = (phase > 0 && phase < 1) ? std::pow(std::sin(pi * phase), 1.5) : 0.0;
            const double shade = std::clamp(1.0 - std::abs(cloud[t] + local), 0.2, 1.0);
            // Raw solar is measured against the raw load peak, then shares the load's scale factor.
            out.p_g(t, n) = ratio * peak * clear * shade * scale;
        }
        out.s_bar(n) = cfg.oversize * out.p_g.col(n).maxCoeff();
    }
    return out;
}

void write_profiles_csv(const std::filesystem::path& path, const ProfileSet& p) {
    p.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "t,bus,p_c,q_c,p_g\n";
    char buf[160];
    for (std::size_t t = 0; t < p.horizon(); ++t)
        for (std::size_t n = 0; n < p.buses(); ++n) {
            const auto ti = static_cast<Eigen::Index>(t), ni = static_cast<Eigen::Index>(n);
            std::snprintf(buf, sizeof buf, "%d,%zu,%.17g,%.17g,%.17g\n", p.timestamps[t], n + 1, p.p_c(ti, ni),
                          p.q_c(ti, ni), p.p_g(ti, ni));
            out << buf;
        }
    if (!out) throw IoError("failed writing " + path.string());
}

ProfileSet read_profiles_csv(const std::filesystem::path& path, double oversize) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t,bus,p_c,q_c,p_g") throw ParseError(path.string() + ": unexpected header '" + line + "'");
    struct Row {
        double pc, qc, pg;
    };
    std::map<int, std::map<std::size_t, Row>> rows;
    std::size_t lineno = 1, max_bus = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        long t = 0;
        long bus = 0;
        Row r{};
        char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
        if (!(ss >> t >> c1 >> bus >> c2 >> r.pc >> c3 >> r.qc >> c4 >> r.pg) || c1 != ',' || c2 != ',' ||
            c3 != ',' || c4 != ',' || bus < 1)
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
        std::string rest;
        ss >> rest;
        if (!rest.empty()) throw ParseError(path.string() + ":" + std::to_string(lineno) + ": trailing fields");
        if (!rows[static_cast<int>(t)].emplace(static_cast<std::size_t>(bus), r).second)
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": duplicate (t, bus)");
        max_bus = std::max(max_bus, static_cast<std::size_t>(bus));
    }
    if (rows.empty()) throw ParseError(path.string() + ": no data rows");
    ProfileSet p;
    const auto T = static_cast<Eigen::Index>(rows.size());
    const auto N = static_cast<Eigen::Index>(max_bus);
    p.p_c.resize(T, N);
    p.q_c.resize(T, N);
    p.p_g.resize(T, N);
    Eigen::Index t = 0;
    for (const auto& [minute, buses] : rows) {
        if (buses.size() != max_bus)
            throw ParseError(path.string() + ": minute " + std::to_string(minute) + " does not list every bus");
        p.timestamps.push_back(minute);
        for (const auto& [bus, r] : buses) {
            const auto n = static_cast<Eigen::Index>(bus - 1);
            p.p_c(t, n) = r.pc;
            p.q_c(t, n) = r.qc;
            p.p_g(t, n) = r.pg;
        }
        ++t;
    }
    p.s_bar.resize(N);
    for (Eigen::Index n = 0; n < N; ++n) p.s_bar(n) = oversize * p.p_g.col(n).maxCoeff();
    p.validate();
    return p;
}

std::vector<std::string> InputLayout::names() const {
    std::vector<std::string> out;
    if (local) out = {"q_bar", "p_net_load", "q_load"};
    for (const Remote& r : remote) out.push_back("flow_line_" + std::to_string(r.line));
    return out;
}

InputLayout make_layout(const FeederModel& f, const std::vector<std::size_t>& remote_lines, bool local) {
    InputLayout layout;
    layout.local = local;
    for (std::size_t l : remote_lines) {
        InputLayout::Remote r;
        r.line = l;
        for (std::size_t bus : f.downstream_of_line(l)) r.downstream.push_back(bus - 1);
        layout.remote.push_back(std::move(r));
    }
    return layout;
}

VectorXd raw_input(const ProfileSet& p, std::size_t t, std::size_t n, const InputLayout& layout) {
    const auto ti = static_cast<Eigen::Index>(t), ni = static_cast<Eigen::Index>(n);
    VectorXd z(static_cast<Eigen::Index>(layout.size()));
    Eigen::Index k = 0;
    if (layout.local) {
        const double sb = p.s_bar(ni), pg = p.p_g(ti, ni);
        z(k++) = std::sqrt(std::max(sb * sb - pg * pg, 0.0));
        z(k++) = p.p_c(ti, ni) - pg;
        z(k++) = p.q_c(ti, ni);
    }
    for (const auto& r : layout.remote) {
        double flow = 0.0;
        for (std::size_t m : r.downstream) {
            if (m >= p.buses()) throw DimensionError("remote channel references a bus outside the profiles");
            flow += p.p_c(ti, static_cast<Eigen::Index>(m)) - p.p_g(ti, static_cast<Eigen::Index>(m));
        }
        z(k++) = flow;
    }
    return z;
}

NormStats NormStats::identity(std::size_t m) {
    const auto mi = static_cast<Eigen::Index>(m);
    return {VectorXd::Zero(mi), VectorXd::Ones(mi)};
}

VectorXd NormStats::apply(const VectorXd& raw) const {
    if (raw.size() != mean.size()) throw DimensionError("input length does not match normalization statistics");
    return ((raw - mean).array() / std.array()).matrix();
}

ScenarioSet ScenarioSet::subset(const std::vector<std::size_t>& columns) const {
    ScenarioSet out;
    out.layout = layout;
    out.normalized = normalized;
    out.norm_stats = norm_stats;
    out.s_bar = s_bar;
    const auto S = static_cast<Eigen::Index>(columns.size());
    const auto N = y.rows();
    out.y.resize(N, S);
    out.q_bar.resize(N, S);
    out.p_c.resize(N, S);
    out.q_c.resize(N, S);
    out.p_g.resize(N, S);
    out.z.assign(z.size(), MatrixXd());
    for (std::size_t n = 0; n < z.size(); ++n) out.z[n].resize(z[n].rows(), S);
    for (Eigen::Index k = 0; k < S; ++k) {
        const std::size_t s = columns[static_cast<std::size_t>(k)];
        if (s >= scenarios()) throw InvalidArgument("scenario index out of range");
        const auto si = static_cast<Eigen::Index>(s);
        out.timestamps.push_back(timestamps[s]);
        out.y.col(k) = y.col(si);
        out.q_bar.col(k) = q_bar.col(si);
        out.p_c.col(k) = p_c.col(si);
        out.q_c.col(k) = q_c.col(si);
        out.p_g.col(k) = p_g.col(si);
        for (std::size_t n = 0; n < z.size(); ++n) out.z[n].col(k) = z[n].col(si);
    }
    return out;
}

ScenarioSet build_scenarios(const ProfileSet& profiles, const Window& window, const Sensitivities& sens,
                            const InputLayout& layout, bool normalize) {
    if (window.size() == 0) throw InvalidArgument("empty scenario window");
    if (window.end > profiles.horizon()) throw InvalidArgument("window extends past the profile horizon");
    const std::size_t N = profiles.buses();
    if (static_cast<std::size_t>(sens.X.rows()) != N) throw DimensionError("sensitivities do not match profiles");
    for (const auto& r : layout.remote)
        for (std::size_t m : r.downstream)
            if (m >= N) throw InvalidArgument("remote channel on line " + std::to_string(r.line) + " is unresolvable");

    const auto S = static_cast<Eigen::Index>(window.size());
    const auto Ni = static_cast<Eigen::Index>(N);
    ScenarioSet out;
    out.layout = layout;
    out.normalized = normalize;
    out.s_bar = profiles.s_bar;
    out.y.resize(Ni, S);
    out.q_bar.resize(Ni, S);
    out.p_c = profiles.p_c.middleRows(static_cast<Eigen::Index>(window.begin), S).transpose();
    out.q_c = profiles.q_c.middleRows(static_cast<Eigen::Index>(window.begin), S).transpose();
    out.p_g = profiles.p_g.middleRows(static_cast<Eigen::Index>(window.begin), S).transpose();
    for (Eigen::Index s = 0; s < S; ++s) {
        const std::size_t t = window.begin + static_cast<std::size_t>(s);
        out.timestamps.push_back(profiles.timestamps[t]);
        out.y.col(s) = sens.R * (out.p_g.col(s) - out.p_c.col(s)) - sens.X * out.q_c.col(s);
        out.q_bar.col(s) = profiles.q_bar(t);
    }

    const auto M = static_cast<Eigen::Index>(layout.size());
    out.z.resize(N);
    out.norm_stats.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
        MatrixXd Z(M, S);
        for (Eigen::Index s = 0; s < S; ++s) Z.col(s) = raw_input(profiles, window.begin + static_cast<std::size_t>(s), n, layout);
        if (normalize) {
            NormStats st;
            st.mean = Z.rowwise().mean();
            const MatrixXd centered = Z.colwise() - st.mean;
            st.std = (centered.array().square().rowwise().sum() / static_cast<double>(S)).sqrt().max(kStdFloor).matrix();
            Z = (centered.array().colwise() / st.std.array()).matrix();
            out.norm_stats[n] = std::move(st);
        } else {
            out.norm_stats[n] = NormStats::identity(layout.size());
        }
        out.z[n] = std::move(Z);
    }
    return out;
}

VectorXd augment_input(const VectorXd& z) {
    VectorXd out(z.size() + 1);
    out(0) = 1.0;
    out.tail(z.size()) = z;
    return out;
}

}  // namespace voltkernel
