#include "voltkernel/feeder.hpp"

#include "voltkernel/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace voltkernel {

namespace {

using Eigen::VectorXd;
using json = nlohmann::json;

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t\r"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// Reads a CSV whose header must equal `header`; returns numeric rows.
std::vector<std::vector<double>> read_csv_table(const std::filesystem::path& path,
                                                const std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
    if (split_csv_line(line) != header) throw ParseError(path.string() + ": unexpected header '" + line + "'");
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields");
        std::vector<double> row;
        for (const auto& c : cells) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(c, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != c.size() || c.empty())
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + c + "'");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::size_t as_index(double v, const std::string& what) {
    if (!(v >= 0) || v != std::floor(v) || v > 1e9) throw ParseError(what + ": not a bus index");
    return static_cast<std::size_t>(v);
}

std::vector<Bus> buses_from_rows(const std::vector<std::pair<std::size_t, Bus>>& rows) {
    std::vector<Bus> buses(rows.size());
    std::vector<bool> seen(rows.size(), false);
    for (const auto& [idx, bus] : rows) {
        if (idx >= rows.size()) throw TopologyError("bus index " + std::to_string(idx) + " out of range");
        if (seen[idx]) throw TopologyError("bus " + std::to_string(idx) + " listed twice");
        seen[idx] = true;
        buses[idx] = bus;
    }
    return buses;
}

}  // namespace

FeederModel::FeederModel(std::vector<Bus> buses, std::vector<Line> lines, double v0, double s_base, double v_base)
    : buses_(std::move(buses)), lines_(std::move(lines)), v0_(v0), s_base_(s_base), v_base_(v_base) {
    const std::size_t nb = buses_.size();
    if (nb < 2) throw TopologyError("feeder needs a substation and at least one bus");
    if (!(v0_ > 0) || !std::isfinite(v0_)) throw InvalidArgument("v0 must be positive");
    if (!(s_base_ > 0) || !(v_base_ > 0)) throw InvalidArgument("base quantities must be positive");
    for (const Bus& b : buses_)
        if (!std::isfinite(b.p_nom) || !std::isfinite(b.q_nom)) throw InvalidArgument("non-finite bus load");

    std::set<std::pair<std::size_t, std::size_t>> pairs;
    DisjointSets sets(nb);
    for (std::size_t l = 0; l < lines_.size(); ++l) {
        const Line& ln = lines_[l];
        const std::string tag = "line " + std::to_string(l) + " (" + std::to_string(ln.from) + "," +
                                std::to_string(ln.to) + ")";
        if (ln.from >= nb || ln.to >= nb) throw TopologyError(tag + " references a missing bus");
        if (ln.from == ln.to) throw TopologyError(tag + " is a self loop");
        if (!(ln.r >= 0) || !(ln.x >= 0) || !std::isfinite(ln.r) || !std::isfinite(ln.x))
            throw InvalidArgument(tag + " has negative or non-finite impedance");
        if (ln.r == 0 && ln.x == 0) throw InvalidArgument(tag + " has zero impedance");
        if (!pairs.insert(std::minmax(ln.from, ln.to)).second) throw TopologyError(tag + " duplicates a line");
        if (!sets.unite(ln.from, ln.to)) throw TopologyError(tag + " closes a cycle");
    }
    for (std::size_t b = 1; b < nb; ++b)
        if (sets.find(b) != sets.find(0))
            throw TopologyError("bus " + std::to_string(b) + " is not connected to the substation");
    // Acyclic and connected over nb buses implies exactly nb - 1 lines.

    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(nb);
    for (std::size_t l = 0; l < lines_.size(); ++l) {
        adj[lines_[l].from].push_back({lines_[l].to, l});
        adj[lines_[l].to].push_back({lines_[l].from, l});
    }
    parent_.assign(nb, 0);
    feeding_line_.assign(nb, 0);
    children_.assign(nb, {});
    std::vector<bool> visited(nb, false);
    order_ = {0};
    visited[0] = true;
    for (std::size_t head = 0; head < order_.size(); ++head) {
        const std::size_t u = order_[head];
        for (auto [w, l] : adj[u]) {
            if (visited[w]) continue;
            visited[w] = true;
            parent_[w] = u;
            feeding_line_[w] = l;
            children_[u].push_back(w);
            if (lines_[l].from != u) std::swap(lines_[l].from, lines_[l].to);
            order_.push_back(w);
        }
    }
}

std::vector<std::size_t> FeederModel::downstream_of_line(std::size_t line) const {
    if (line >= lines_.size()) throw InvalidArgument("line " + std::to_string(line) + " does not exist");
    std::vector<std::size_t> out = {lines_[line].to};
    for (std::size_t head = 0; head < out.size(); ++head)
        for (std::size_t c : children_[out[head]]) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
}

VectorXd FeederModel::p_nom() const {
    VectorXd v(size());
    for (std::size_t n = 1; n < buses_.size(); ++n) v(n - 1) = buses_[n].p_nom;
    return v;
}

VectorXd FeederModel::q_nom() const {
    VectorXd v(size());
    for (std::size_t n = 1; n < buses_.size(); ++n) v(n - 1) = buses_[n].q_nom;
    return v;
}

FeederModel parse_feeder_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("feeder json: ") + e.what());
    }
    try {
        std::vector<std::pair<std::size_t, Bus>> rows;
        for (const auto& b : doc.at("buses"))
            rows.push_back({b.at("bus").get<std::size_t>(), Bus{b.value("p_nom", 0.0), b.value("q_nom", 0.0)}});
        std::vector<Line> lines;
        for (const auto& l : doc.at("lines"))
            lines.push_back(Line{l.at("from").get<std::size_t>(), l.at("to").get<std::size_t>(),
                                 l.at("r_pu").get<double>(), l.at("x_pu").get<double>()});
        return FeederModel(buses_from_rows(rows), std::move(lines), doc.value("v0", 1.0), doc.value("s_base", 1.0),
                           doc.value("v_base", 1.0));
    } catch (const json::exception& e) {
        throw ParseError(std::string("feeder json: ") + e.what());
    }
}

FeederModel load_feeder_csv(const std::filesystem::path& lines_csv, const std::filesystem::path& buses_csv) {
    std::vector<Line> lines;
    for (const auto& r : read_csv_table(lines_csv, {"from", "to", "r_pu", "x_pu"}))
        lines.push_back(Line{as_index(r[0], lines_csv.string()), as_index(r[1], lines_csv.string()), r[2], r[3]});
    std::vector<std::pair<std::size_t, Bus>> rows;
    for (const auto& r : read_csv_table(buses_csv, {"bus", "p_nom", "q_nom"}))
        rows.push_back({as_index(r[0], buses_csv.string()), Bus{r[1], r[2]}});
    return FeederModel(buses_from_rows(rows), std::move(lines));
}

FeederModel load_feeder(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) return load_feeder_csv(path / "lines.csv", path / "buses.csv");
    if (!std::filesystem::exists(path)) throw IoError("feeder file not found: " + path.string());
    return parse_feeder_json(read_text(path));
}

std::string feeder_to_json(const FeederModel& f) {
    json doc;
    doc["v0"] = f.v0();
    doc["s_base"] = f.s_base();
    doc["v_base"] = f.v_base();
    doc["buses"] = json::array();
    for (std::size_t b = 0; b < f.buses().size(); ++b)
        doc["buses"].push_back({{"bus", b}, {"p_nom", f.buses()[b].p_nom}, {"q_nom", f.buses()[b].q_nom}});
    doc["lines"] = json::array();
    for (const Line& l : f.lines())
        doc["lines"].push_back({{"from", l.from}, {"to", l.to}, {"r_pu", l.r}, {"x_pu", l.x}});
    return doc.dump(2);
}

Sensitivities build_sensitivities(const FeederModel& f) {
    const auto n = static_cast<Eigen::Index>(f.size());
    Sensitivities s;
    s.v0 = f.v0();
    s.R = Eigen::MatrixXd::Zero(n, n);
    s.X = Eigen::MatrixXd::Zero(n, n);
    // Every line contributes its impedance to all pairs of buses below it.
    for (std::size_t l = 0; l < f.lines().size(); ++l) {
        const auto below = f.downstream_of_line(l);
        for (std::size_t i : below)
            for (std::size_t j : below) {
                s.R(i - 1, j - 1) += f.lines()[l].r;
                s.X(i - 1, j - 1) += f.lines()[l].x;
            }
    }
    s.R /= f.v0();
    s.X /= f.v0();
    return s;
}

VoltageProfile ac_power_flow(const FeederModel& f, const VectorXd& p, const VectorXd& q,
                             const PowerFlowOptions& options) {
    using cplx = std::complex<double>;
    const std::size_t nb = f.buses().size();
    if (static_cast<std::size_t>(p.size()) != f.size() || static_cast<std::size_t>(q.size()) != f.size())
        throw DimensionError("injection vectors must have one entry per bus");

    std::vector<cplx> V(nb, cplx(f.v0(), 0.0)), Vnew(nb), J(nb);
    VoltageProfile out;
    const auto& order = f.order();
    for (int it = 1; it <= options.max_iters; ++it) {
        // Backward sweep: branch currents from leaves toward the substation.
        for (auto k = order.size(); k-- > 1;) {
            const std::size_t n = order[k];
            const cplx s(p(n - 1), q(n - 1));
            cplx cur = -std::conj(s / V[n]);
            for (std::size_t c : f.children(n)) cur += J[c];
            J[n] = cur;
        }
        // Forward sweep: voltage drops from the substation outward.
        Vnew[0] = cplx(f.v0(), 0.0);
        double change = 0.0;
        for (std::size_t k = 1; k < order.size(); ++k) {
            const std::size_t n = order[k];
            const Line& ln = f.lines()[f.feeding_line(n)];
            Vnew[n] = Vnew[f.parent(n)] - cplx(ln.r, ln.x) * J[n];
            change = std::max(change, std::abs(Vnew[n] - V[n]));
        }
        V.swap(Vnew);
        out.iterations = it;
        out.change_history.push_back(change);
        if (!std::isfinite(change)) break;
        if (change < options.tol) {
            out.converged = true;
            break;
        }
    }
    out.v.resize(static_cast<Eigen::Index>(f.size()));
    for (std::size_t n = 1; n < nb; ++n) out.v(n - 1) = std::abs(V[n]);
    if (!out.v.allFinite() || (out.v.array() <= 0).any()) out.converged = false;
    return out;
}

}  // namespace voltkernel
