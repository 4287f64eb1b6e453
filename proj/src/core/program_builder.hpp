#pragma once

// Incremental assembly of conic programs from affine cone rows.

#include "voltkernel/conic.hpp"

#include <string>
#include <utility>
#include <vector>

namespace voltkernel::detail {

/// sum_j coef_j x_j + constant
struct Affine {
    std::vector<std::pair<Eigen::Index, double>> terms;
    double constant = 0.0;

    Affine() = default;
    explicit Affine(double c) : constant(c) {}
    Affine& add(Eigen::Index var, double coef) {
        if (coef != 0.0) terms.emplace_back(var, coef);
        return *this;
    }
};

class ProgramBuilder {
public:
    Eigen::Index add_var(std::string name) {
        names_.push_back(std::move(name));
        cost_.push_back(0.0);
        return static_cast<Eigen::Index>(names_.size() - 1);
    }
    Eigen::Index add_vars(Eigen::Index count, const std::string& prefix) {
        const auto first = static_cast<Eigen::Index>(names_.size());
        for (Eigen::Index i = 0; i < count; ++i) add_var(prefix + "[" + std::to_string(i) + "]");
        return first;
    }
    void set_cost(Eigen::Index var, double c) { cost_.at(static_cast<std::size_t>(var)) = c; }

    /// Requires the affine rows to lie in one cone of the given kind.
    void add_cone(conic::ConeKind kind, std::vector<Affine> rows) {
        if (rows.empty()) return;
        if (kind != conic::ConeKind::soc && !blocks_.empty() && blocks_.back().first.kind == kind) {
            blocks_.back().first.size += rows.size();
            for (auto& r : rows) blocks_.back().second.push_back(std::move(r));
            return;
        }
        conic::Cone cone{kind, rows.size()};
        blocks_.emplace_back(cone, std::move(rows));
    }
    void add_nonneg(Affine row) { add_cone(conic::ConeKind::nonnegative, {std::move(row)}); }

    Eigen::Index num_vars() const { return static_cast<Eigen::Index>(names_.size()); }

    conic::ConeProgram build() const {
        conic::ConeProgram p;
        std::size_t m = 0;
        for (const auto& b : blocks_) m += b.second.size();
        const auto n = static_cast<Eigen::Index>(names_.size());
        p.c = Eigen::Map<const Eigen::VectorXd>(cost_.data(), n);
        p.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), n);
        p.b.resize(static_cast<Eigen::Index>(m));
        p.var_names = names_;
        Eigen::Index row = 0;
        for (const auto& [cone, rows] : blocks_) {
            p.cones.push_back(cone);
            for (const Affine& r : rows) {
                // s = b - A x must equal the affine expression.
                for (auto [j, v] : r.terms) p.A(row, j) -= v;
                p.b(row) = r.constant;
                ++row;
            }
        }
        return p;
    }

private:
    std::vector<std::string> names_;
    std::vector<double> cost_;
    std::vector<std::pair<conic::Cone, std::vector<Affine>>> blocks_;
};

/// Rows of the rotated-cone form of ||u||^2 <= t: (t + 1, 2u, t - 1) in SOC.
inline std::vector<Affine> squared_norm_epigraph(const std::vector<Affine>& u, Eigen::Index t) {
    std::vector<Affine> rows;
    rows.push_back(Affine(1.0).add(t, 1.0));
    for (const Affine& ui : u) {
        Affine r = ui;
        r.constant *= 2.0;
        for (auto& term : r.terms) term.second *= 2.0;
        rows.push_back(std::move(r));
    }
    rows.push_back(Affine(-1.0).add(t, 1.0));
    return rows;
}

}  // namespace voltkernel::detail
