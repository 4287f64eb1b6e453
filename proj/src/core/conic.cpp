#include "voltkernel/conic.hpp"

#include "voltkernel/errors.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace voltkernel::conic {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(Status status) noexcept {
    switch (status) {
        case Status::optimal: return "optimal";
        case Status::max_iters: return "max_iters";
        case Status::infeasible_detected: return "infeasible_detected";
    }
    return "unknown";
}

void ConeProgram::validate() const {
    if (A.rows() != b.size() || A.cols() != c.size()) {
        std::ostringstream msg;
        msg << "cone program: A is " << A.rows() << "x" << A.cols() << " but b has " << b.size()
            << " and c has " << c.size() << " entries";
        throw DimensionError(msg.str());
    }
    std::size_t total = 0;
    for (const auto& cone : cones) {
        if (cone.kind == ConeKind::soc && cone.size < 1) {
            throw DimensionError("cone program: empty second-order cone");
        }
        total += cone.size;
    }
    if (total != num_rows()) {
        throw DimensionError("cone program: cone sizes sum to " + std::to_string(total) + ", expected " +
                             std::to_string(num_rows()));
    }
    if (!var_names.empty() && var_names.size() != num_vars()) {
        throw DimensionError("cone program: var_names length does not match variable count");
    }
}

std::pair<VectorXd, double> project_soc(const VectorXd& x, double t) {
    const double nx = x.norm();
    if (nx <= t) {
        return {x, t};
    }
    if (nx <= -t) {
        return {VectorXd::Zero(x.size()), 0.0};
    }
    const double scale = 0.5 * (t + nx);
    return {(scale / nx) * x, scale};
}

VectorXd project_cone(const std::vector<Cone>& cones, const VectorXd& v, bool dual) {
    VectorXd out(v.size());
    Index off = 0;
    for (const auto& cone : cones) {
        const auto len = static_cast<Index>(cone.size);
        switch (cone.kind) {
            case ConeKind::zero:
                if (dual) {
                    out.segment(off, len) = v.segment(off, len);
                } else {
                    out.segment(off, len).setZero();
                }
                break;
            case ConeKind::nonnegative:
                out.segment(off, len) = v.segment(off, len).cwiseMax(0.0);
                break;
            case ConeKind::soc: {
                auto [x, t] = project_soc(v.segment(off + 1, len - 1), v(off));
                out(off) = t;
                out.segment(off + 1, len - 1) = x;
                break;
            }
        }
        off += len;
    }
    return out;
}

Residuals residuals(const ConeProgram& p, const VectorXd& x, const VectorXd& z) {
    p.validate();
    if (x.size() != p.c.size() || z.size() != p.b.size()) {
        throw DimensionError("residuals: primal/dual vector length mismatch");
    }
    Residuals r;
    if (p.num_rows() == 0 && p.num_vars() == 0) {
        return r;
    }
    const VectorXd s = p.b - p.A * x;
    r.primal = (s - project_cone(p.cones, s, false)).norm() / (1.0 + p.b.norm());

    const VectorXd stationarity = p.A.transpose() * z + p.c;
    const double cone_violation = (z - project_cone(p.cones, z, true)).norm();
    r.dual = std::hypot(stationarity.norm(), cone_violation) / (1.0 + p.c.norm());

    const double pobj = p.c.dot(x);
    const double dobj = -p.b.dot(z);
    r.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    return r;
}

namespace {

struct Block {
    ConeKind kind;
    Index offset;
    Index size;
};

// Diagonal equilibration: the solver works on D A E, D b, E c. Rows of a
// second-order cone share one factor so the cone is preserved.
struct Equilibration {
    VectorXd row;
    VectorXd col;
};

Equilibration ruiz(const ConeProgram& p, bool enabled) {
    const Index m = p.A.rows();
    const Index n = p.A.cols();
    Equilibration eq{VectorXd::Ones(m), VectorXd::Ones(n)};
    if (!enabled || m == 0 || n == 0) {
        return eq;
    }
    MatrixXd work = p.A;
    constexpr int passes = 25;
    constexpr double floor = 1e-4;
    constexpr double ceil = 1e4;
    for (int pass = 0; pass < passes; ++pass) {
        VectorXd dr(m);
        Index off = 0;
        for (const auto& cone : p.cones) {
            const auto len = static_cast<Index>(cone.size);
            if (cone.kind == ConeKind::soc) {
                double nrm = 0.0;
                for (Index i = off; i < off + len; ++i) {
                    nrm = std::max(nrm, work.row(i).cwiseAbs().maxCoeff());
                }
                dr.segment(off, len).setConstant(nrm < 1e-12 ? 1.0 : 1.0 / std::sqrt(nrm));
            } else {
                for (Index i = off; i < off + len; ++i) {
                    const double nrm = work.row(i).cwiseAbs().maxCoeff();
                    dr(i) = nrm < 1e-12 ? 1.0 : 1.0 / std::sqrt(nrm);
                }
            }
            off += len;
        }
        VectorXd dc(n);
        for (Index j = 0; j < n; ++j) {
            const double nrm = work.col(j).cwiseAbs().maxCoeff();
            dc(j) = nrm < 1e-12 ? 1.0 : 1.0 / std::sqrt(nrm);
        }
        work = dr.asDiagonal() * work * dc.asDiagonal();
        eq.row = eq.row.cwiseProduct(dr).cwiseMax(floor).cwiseMin(ceil);
        eq.col = eq.col.cwiseProduct(dc).cwiseMax(floor).cwiseMin(ceil);
        if ((dr.array() - 1.0).abs().maxCoeff() < 1e-3 && (dc.array() - 1.0).abs().maxCoeff() < 1e-3) {
            break;
        }
    }
    return eq;
}

// -- cone algebra over the inequality rows (nonnegative and second-order) --

class ConeAlgebra {
public:
    explicit ConeAlgebra(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
        for (const auto& b : blocks_) {
            dim_ += b.size;
            degree_ += (b.kind == ConeKind::nonnegative) ? b.size : 1;
        }
    }

    Index dim() const { return dim_; }
    Index degree() const { return degree_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    VectorXd identity() const {
        VectorXd e = VectorXd::Zero(dim_);
        for (const auto& b : blocks_) {
            if (b.kind == ConeKind::nonnegative) {
                e.segment(b.offset, b.size).setOnes();
            } else {
                e(b.offset) = 1.0;
            }
        }
        return e;
    }

    // Smallest "eigenvalue" over all blocks; positive iff v is interior.
    double min_eig(const VectorXd& v) const {
        double lo = std::numeric_limits<double>::infinity();
        for (const auto& b : blocks_) {
            if (b.kind == ConeKind::nonnegative) {
                lo = std::min(lo, v.segment(b.offset, b.size).minCoeff());
            } else {
                lo = std::min(lo, v(b.offset) - v.segment(b.offset + 1, b.size - 1).norm());
            }
        }
        return lo;
    }

    VectorXd product(const VectorXd& u, const VectorXd& v) const {
        VectorXd out(dim_);
        for (const auto& b : blocks_) {
            if (b.kind == ConeKind::nonnegative) {
                out.segment(b.offset, b.size) = u.segment(b.offset, b.size).cwiseProduct(v.segment(b.offset, b.size));
            } else {
                const Index o = b.offset;
                const Index k = b.size - 1;
                out(o) = u.segment(o, b.size).dot(v.segment(o, b.size));
                out.segment(o + 1, k) = u(o) * v.segment(o + 1, k) + v(o) * u.segment(o + 1, k);
            }
        }
        return out;
    }

    // Solves lambda o u = r for u.
    VectorXd divide(const VectorXd& lambda, const VectorXd& r) const {
        VectorXd out(dim_);
        for (const auto& b : blocks_) {
            if (b.kind == ConeKind::nonnegative) {
                out.segment(b.offset, b.size) = r.segment(b.offset, b.size).cwiseQuotient(lambda.segment(b.offset, b.size));
            } else {
                const Index o = b.offset;
                const Index k = b.size - 1;
                const double l0 = lambda(o);
                const auto l1 = lambda.segment(o + 1, k);
                const double det = l0 * l0 - l1.squaredNorm();
                const double u0 = (l0 * r(o) - l1.dot(r.segment(o + 1, k))) / det;
                out(o) = u0;
                out.segment(o + 1, k) = (r.segment(o + 1, k) - u0 * l1) / l0;
            }
        }
        return out;
    }

    // Largest alpha with v + alpha d in the cone (infinity if unbounded).
    double max_step(const VectorXd& v, const VectorXd& d) const {
        double alpha = std::numeric_limits<double>::infinity();
        for (const auto& b : blocks_) {
            if (b.kind == ConeKind::nonnegative) {
                for (Index i = b.offset; i < b.offset + b.size; ++i) {
                    if (d(i) < 0.0) {
                        alpha = std::min(alpha, -v(i) / d(i));
                    }
                }
            } else {
                alpha = std::min(alpha, soc_step(v.segment(b.offset, b.size), d.segment(b.offset, b.size)));
            }
        }
        return alpha;
    }

private:
    static double soc_step(const Eigen::Ref<const VectorXd>& v, const Eigen::Ref<const VectorXd>& d) {
        const Index k = v.size() - 1;
        const double v0 = v(0);
        const double d0 = d(0);
        const auto v1 = v.tail(k);
        const auto d1 = d.tail(k);
        double alpha = std::numeric_limits<double>::infinity();
        if (d0 < 0.0) {
            alpha = -v0 / d0;
        }
        // f(a) = (v0 + a d0)^2 - ||v1 + a d1||^2 = c + 2 b a + a_ a^2, f(0) > 0
        const double qa = d0 * d0 - d1.squaredNorm();
        const double qb = v0 * d0 - v1.dot(d1);
        const double qc = std::max(0.0, (v0 - v1.norm()) * (v0 + v1.norm()));
        double root = std::numeric_limits<double>::infinity();
        if (std::abs(qa) < 1e-300) {
            if (qb < 0.0) {
                root = -qc / (2.0 * qb);
            }
        } else {
            const double disc = qb * qb - qa * qc;
            if (qa < 0.0) {
                // downward parabola with f(0) > 0: exactly one positive root
                const double sq = std::sqrt(std::max(disc, 0.0));
                const double q = -(qb + std::copysign(sq, qb));
                root = std::max(q / qa, qc / q);
            } else if (disc >= 0.0 && qb < 0.0) {
                const double sq = std::sqrt(disc);
                const double q = -qb + sq;
                root = std::min(q / qa, qc / q);
            }
        }
        return std::min(alpha, root);
    }

    std::vector<Block> blocks_;
    Index dim_ = 0;
    Index degree_ = 0;
};

// Nesterov-Todd scaling W with W z = W^{-1} s = lambda.
struct NtScaling {
    VectorXd diag;                  // nonnegative entries
    std::vector<double> eta;        // per block (second-order cones only)
    std::vector<VectorXd> wbar;
};

class NtOps {
public:
    explicit NtOps(const ConeAlgebra& cones) : cones_(cones) {}

    NtScaling compute(const VectorXd& s, const VectorXd& z, VectorXd& lambda) const {
        NtScaling w;
        w.diag = VectorXd::Ones(cones_.dim());
        w.eta.assign(cones_.blocks().size(), 1.0);
        w.wbar.resize(cones_.blocks().size());
        std::size_t bi = 0;
        for (const auto& b : cones_.blocks()) {
            if (b.kind == ConeKind::nonnegative) {
                const auto ss = s.segment(b.offset, b.size);
                const auto zz = z.segment(b.offset, b.size);
                w.diag.segment(b.offset, b.size) = ss.cwiseQuotient(zz).cwiseSqrt();
            } else {
                const Index o = b.offset;
                const Index k = b.size - 1;
                const double sn = s.segment(o + 1, k).norm();
                const double zn = z.segment(o + 1, k).norm();
                const double sa = std::sqrt(std::max((s(o) - sn) * (s(o) + sn), 1e-300));
                const double za = std::sqrt(std::max((z(o) - zn) * (z(o) + zn), 1e-300));
                const VectorXd sb = s.segment(o, b.size) / sa;
                const VectorXd zb = z.segment(o, b.size) / za;
                const double gamma = std::sqrt(std::max(0.5 * (1.0 + sb.dot(zb)), 1e-300));
                VectorXd wb(b.size);
                wb(0) = (sb(0) + zb(0)) / (2.0 * gamma);
                wb.tail(k) = (sb.tail(k) - zb.tail(k)) / (2.0 * gamma);
                w.eta[bi] = std::sqrt(sa / za);
                w.wbar[bi] = std::move(wb);
            }
            ++bi;
        }
        lambda = apply(w, z, false);
        return w;
    }

    // W v (inverse = false) or W^{-1} v (inverse = true).
    VectorXd apply(const NtScaling& w, const VectorXd& v, bool inverse) const {
        VectorXd out(v.size());
        std::size_t bi = 0;
        for (const auto& b : cones_.blocks()) {
            if (b.kind == ConeKind::nonnegative) {
                const auto d = w.diag.segment(b.offset, b.size);
                if (inverse) {
                    out.segment(b.offset, b.size) = v.segment(b.offset, b.size).cwiseQuotient(d);
                } else {
                    out.segment(b.offset, b.size) = v.segment(b.offset, b.size).cwiseProduct(d);
                }
            } else {
                const Index o = b.offset;
                const Index k = b.size - 1;
                const VectorXd& wb = w.wbar[bi];
                const double eta = w.eta[bi];
                const double sign = inverse ? -1.0 : 1.0;
                const double scale = inverse ? 1.0 / eta : eta;
                const auto w1 = wb.tail(k);
                const double x0 = v(o);
                const double inner = w1.dot(v.segment(o + 1, k));
                out(o) = scale * (wb(0) * x0 + sign * inner);
                out.segment(o + 1, k) = scale * (v.segment(o + 1, k) + (inner / (1.0 + wb(0)) + sign * x0) * w1);
            }
            ++bi;
        }
        return out;
    }

    // Applies W^{-1} to every column of M (rows indexed like the cone vector).
    void apply_inverse_rows(const NtScaling& w, MatrixXd& m) const {
        std::size_t bi = 0;
        for (const auto& b : cones_.blocks()) {
            if (b.kind == ConeKind::nonnegative) {
                for (Index i = b.offset; i < b.offset + b.size; ++i) {
                    m.row(i) /= w.diag(i);
                }
            } else {
                const Index o = b.offset;
                const Index k = b.size - 1;
                const VectorXd& wb = w.wbar[bi];
                const double inv_eta = 1.0 / w.eta[bi];
                const auto w1 = wb.tail(k);
                const Eigen::RowVectorXd top = m.row(o);
                const Eigen::RowVectorXd inner = w1.transpose() * m.middleRows(o + 1, k);
                m.row(o) = inv_eta * (wb(0) * top - inner);
                const Eigen::RowVectorXd coef = inner / (1.0 + wb(0)) - top;
                m.middleRows(o + 1, k) += w1 * coef;
                m.middleRows(o + 1, k) *= inv_eta;
            }
            ++bi;
        }
    }

    // Dense W'W restricted to block bi.
    MatrixXd block_square(const NtScaling& w, std::size_t bi) const {
        const Block& b = cones_.blocks()[bi];
        if (b.kind == ConeKind::nonnegative) {
            return w.diag.segment(b.offset, b.size).array().square().matrix().asDiagonal();
        }
        // eta^2 (2 wbar wbar' - J),  J = diag(1, -1, ..., -1)
        const VectorXd& wb = w.wbar[bi];
        MatrixXd m = 2.0 * wb * wb.transpose();
        m(0, 0) -= 1.0;
        m.diagonal().tail(b.size - 1).array() += 1.0;
        return w.eta[bi] * w.eta[bi] * m;
    }

    const ConeAlgebra& cones() const { return cones_; }

private:
    const ConeAlgebra& cones_;
};

// KKT system
//   [ 0   Ae'  G'   ] [x]   [r1]
//   [ Ae  0    0    ] [y] = [r2]
//   [ G   0   -W'W  ] [z]   [r3]
// Large sparse programs factor it whole as a quasi-definite LDL' (small
// static regularization, refined against the exact operator). Small or dense
// ones eliminate z and factor [H Ae'; Ae 0], H = G'W^{-1}W^{-T}G, densely.
class KktSolver {
public:
    KktSolver(const MatrixXd& ae, const MatrixXd& g, const NtOps& nt)
        : ae_(ae), g_(g), nt_(nt), ae_sparse_(ae.sparseView(1.0, 0.0)), g_sparse_(g.sparseView(1.0, 0.0)) {
        const Index dim = g.cols() + ae.rows() + g.rows();
        const double nnz = static_cast<double>(ae_sparse_.nonZeros() + g_sparse_.nonZeros());
        const double dense = static_cast<double>(ae.size() + g.size());
        prefer_sparse_ = dim >= kSparseThreshold && nnz <= 0.2 * dense;
    }

    void factor(const NtScaling& w) {
        w_ = &w;
        if (prefer_sparse_ && factor_sparse()) {
            mode_ = Mode::sparse_ldlt;
            return;
        }
        factor_dense();
    }

    void solve(const VectorXd& r1, const VectorXd& r2, const VectorXd& r3, VectorXd& x, VectorXd& y,
               VectorXd& z) const {
        if (mode_ == Mode::sparse_ldlt) {
            solve_sparse(r1, r2, r3, x, y, z);
        } else {
            solve_dense(r1, r2, r3, x, y, z);
        }
    }

private:
    using SparseMatrix = Eigen::SparseMatrix<double>;
    enum class Mode { dense_llt, dense_lu, sparse_ldlt };
    static constexpr Index kSparseThreshold = 300;

    bool factor_sparse() {
        const Index n = g_.cols();
        const Index p = ae_.rows();
        const Index m = g_.rows();
        const double gmax = std::max(1.0, g_sparse_.coeffs().cwiseAbs().maxCoeff());
        delta_ = 1e-12 * gmax;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(ae_sparse_.nonZeros() + g_sparse_.nonZeros() + 2 * (n + p + m)));
        for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, delta_);
        for (Index k = 0; k < ae_sparse_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(ae_sparse_, k); it; ++it)
                trip.emplace_back(n + it.row(), it.col(), it.value());
        for (Index i = 0; i < p; ++i) trip.emplace_back(n + i, n + i, -delta_);
        for (Index k = 0; k < g_sparse_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(g_sparse_, k); it; ++it)
                trip.emplace_back(n + p + it.row(), it.col(), it.value());
        const auto& blocks = nt_.cones().blocks();
        for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
            const MatrixXd sq = nt_.block_square(*w_, bi);
            const Index o = n + p + blocks[bi].offset;
            for (Index j = 0; j < sq.cols(); ++j) {
                trip.emplace_back(o + j, o + j, -sq(j, j) - delta_);
                if (blocks[bi].kind == ConeKind::soc)
                    for (Index i = j + 1; i < sq.rows(); ++i) trip.emplace_back(o + i, o + j, -sq(i, j));
            }
        }
        SparseMatrix kkt(n + p + m, n + p + m);
        kkt.setFromTriplets(trip.begin(), trip.end());
        if (!analyzed_) {
            ldlt_.analyzePattern(kkt);
            analyzed_ = true;
        }
        ldlt_.factorize(kkt);
        return ldlt_.info() == Eigen::Success && ldlt_.vectorD().allFinite();
    }

    void solve_sparse(const VectorXd& r1, const VectorXd& r2, const VectorXd& r3, VectorXd& x, VectorXd& y,
                      VectorXd& z) const {
        const Index n = g_.cols();
        const Index p = ae_.rows();
        const Index m = g_.rows();
        VectorXd rhs(n + p + m);
        rhs << r1, r2, r3;
        VectorXd sol = ldlt_.solve(rhs);
        double prev = INFINITY;
        for (int refine = 0; refine < 10; ++refine) {
            const VectorXd res = rhs - apply_full(sol);
            const double rn = res.norm();
            if (rn <= 1e-15 * (1.0 + rhs.norm()) || rn >= 0.5 * prev) break;
            prev = rn;
            sol += ldlt_.solve(res);
        }
        x = sol.head(n);
        y = sol.segment(n, p);
        z = sol.tail(m);
    }

    VectorXd apply_full(const VectorXd& v) const {
        const Index n = g_.cols();
        const Index p = ae_.rows();
        const Index m = g_.rows();
        const auto x = v.head(n);
        const auto y = v.segment(n, p);
        const VectorXd z = v.tail(m);
        VectorXd out(n + p + m);
        out.head(n) = g_sparse_.transpose() * z;
        if (p > 0) {
            out.head(n) += ae_sparse_.transpose() * y;
        }
        out.segment(n, p) = ae_sparse_ * x;
        out.tail(m) = g_sparse_ * x - nt_.apply(*w_, nt_.apply(*w_, z, false), false);
        return out;
    }

    void factor_dense() {
        b_ = g_;
        nt_.apply_inverse_rows(*w_, b_);
        const Index n = g_.cols();
        const Index p = ae_.rows();
        h_.setZero(n, n);
        h_.selfadjointView<Eigen::Lower>().rankUpdate(b_.transpose());
        h_.triangularView<Eigen::StrictlyUpper>() = h_.transpose();
        const double scale = std::max(1.0, h_.diagonal().cwiseAbs().maxCoeff());
        delta_ = 1e-13 * scale;
        mode_ = Mode::dense_lu;
        if (p == 0) {
            MatrixXd reg = h_;
            reg.diagonal().array() += delta_;
            llt_.compute(reg);
            if (llt_.info() == Eigen::Success) {
                mode_ = Mode::dense_llt;
            } else {
                lu_.compute(reg);
            }
        } else {
            MatrixXd kkt(n + p, n + p);
            kkt.topLeftCorner(n, n) = h_;
            kkt.topLeftCorner(n, n).diagonal().array() += delta_;
            kkt.topRightCorner(n, p) = ae_.transpose();
            kkt.bottomLeftCorner(p, n) = ae_;
            kkt.bottomRightCorner(p, p) = -delta_ * MatrixXd::Identity(p, p);
            lu_.compute(kkt);
        }
    }

    void solve_dense(const VectorXd& r1, const VectorXd& r2, const VectorXd& r3, VectorXd& x, VectorXd& y,
                     VectorXd& z) const {
        const Index n = g_.cols();
        const Index p = ae_.rows();
        const VectorXd winv_r3 = nt_.apply(*w_, r3, true);
        const VectorXd rhs1 = r1 + b_.transpose() * winv_r3;
        VectorXd sol = VectorXd::Zero(n + p);
        VectorXd rhs(n + p);
        rhs << rhs1, r2;
        VectorXd res = rhs;
        for (int refine = 0; refine < 4; ++refine) {
            sol += mode_ == Mode::dense_llt ? VectorXd(llt_.solve(res)) : VectorXd(lu_.solve(res));
            res = rhs - apply_reduced(sol);
            if (res.norm() <= 1e-14 * (1.0 + rhs.norm())) {
                break;
            }
        }
        x = sol.head(n);
        y = sol.tail(p);
        z = nt_.apply(*w_, VectorXd(b_ * x - winv_r3), true);
    }

    VectorXd apply_reduced(const VectorXd& v) const {
        const Index n = g_.cols();
        const Index p = ae_.rows();
        VectorXd out(n + p);
        out.head(n) = h_ * v.head(n);
        if (p > 0) {
            out.head(n) += ae_.transpose() * v.tail(p);
            out.tail(p) = ae_ * v.head(n);
        }
        return out;
    }

    const MatrixXd& ae_;
    const MatrixXd& g_;
    const NtOps& nt_;
    const NtScaling* w_ = nullptr;
    SparseMatrix ae_sparse_;
    SparseMatrix g_sparse_;
    bool prefer_sparse_ = false;
    bool analyzed_ = false;
    MatrixXd b_;
    MatrixXd h_;
    double delta_ = 0.0;
    Mode mode_ = Mode::dense_lu;
    Eigen::LLT<MatrixXd> llt_;
    Eigen::PartialPivLU<MatrixXd> lu_;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

// Splits a scaled program into equality rows (Ae x = be) and conic rows
// (G x + s = h, s in K), remembering the original row positions.
struct SplitProgram {
    MatrixXd ae;
    VectorXd be;
    MatrixXd g;
    VectorXd h;
    VectorXd c;
    std::vector<Index> eq_rows;
    std::vector<Index> cone_rows;
    std::vector<Block> blocks;
};

SplitProgram split(const ConeProgram& p, const Equilibration& eq) {
    SplitProgram sp;
    Index off = 0;
    Index cone_off = 0;
    for (const auto& cone : p.cones) {
        const auto len = static_cast<Index>(cone.size);
        for (Index i = off; i < off + len; ++i) {
            (cone.kind == ConeKind::zero ? sp.eq_rows : sp.cone_rows).push_back(i);
        }
        if (cone.kind != ConeKind::zero && len > 0) {
            if (cone.kind == ConeKind::nonnegative) {
                sp.blocks.push_back({ConeKind::nonnegative, cone_off, len});
            } else if (len == 1) {
                sp.blocks.push_back({ConeKind::nonnegative, cone_off, 1});
            } else {
                sp.blocks.push_back({ConeKind::soc, cone_off, len});
            }
            cone_off += len;
        }
        off += len;
    }
    const Index n = p.A.cols();
    const auto pe = static_cast<Index>(sp.eq_rows.size());
    const auto mi = static_cast<Index>(sp.cone_rows.size());
    sp.ae.resize(pe, n);
    sp.be.resize(pe);
    sp.g.resize(mi, n);
    sp.h.resize(mi);
    for (Index k = 0; k < pe; ++k) {
        const Index i = sp.eq_rows[k];
        sp.ae.row(k) = eq.row(i) * p.A.row(i).cwiseProduct(eq.col.transpose());
        sp.be(k) = eq.row(i) * p.b(i);
    }
    for (Index k = 0; k < mi; ++k) {
        const Index i = sp.cone_rows[k];
        sp.g.row(k) = eq.row(i) * p.A.row(i).cwiseProduct(eq.col.transpose());
        sp.h(k) = eq.row(i) * p.b(i);
    }
    sp.c = p.c.cwiseProduct(eq.col);
    return sp;
}

struct Unscaled {
    VectorXd x;
    VectorXd z;
};

Unscaled unscale(const SplitProgram& sp, const Equilibration& eq, const VectorXd& x, const VectorXd& y,
                 const VectorXd& z, double tau) {
    Unscaled u;
    u.x = eq.col.cwiseProduct(x) / tau;
    u.z = VectorXd::Zero(eq.row.size());
    for (std::size_t k = 0; k < sp.eq_rows.size(); ++k) {
        const Index i = sp.eq_rows[k];
        u.z(i) = eq.row(i) * y(static_cast<Index>(k)) / tau;
    }
    for (std::size_t k = 0; k < sp.cone_rows.size(); ++k) {
        const Index i = sp.cone_rows[k];
        u.z(i) = eq.row(i) * z(static_cast<Index>(k)) / tau;
    }
    return u;
}

void finalize(const ConeProgram& p, ConeSolution& sol) {
    const Residuals r = residuals(p, sol.x, sol.z);
    sol.primal_res = r.primal;
    sol.dual_res = r.dual;
    sol.gap = r.gap;
    sol.s = p.b - p.A * sol.x;
    sol.primal_objective = p.c.dot(sol.x);
    sol.dual_objective = -p.b.dot(sol.z);
}

bool converged(const ConeSolution& sol, double tol) {
    return sol.primal_res <= tol && sol.dual_res <= tol && sol.gap <= tol;
}

double worst(const ConeSolution& sol) { return std::max({sol.primal_res, sol.dual_res, sol.gap}); }

ConeSolution trivial_solution(const ConeProgram& p) {
    ConeSolution sol;
    sol.x = VectorXd::Zero(p.c.size());
    sol.z = VectorXd::Zero(p.b.size());
    finalize(p, sol);
    sol.status = (p.c.size() == 0 || p.c.isZero(0.0)) && sol.primal_res == 0.0 ? Status::optimal : Status::max_iters;
    return sol;
}

ConeSolution solve_interior_point(const ConeProgram& p, const SolveOptions& opt) {
    const Equilibration eq = ruiz(p, opt.equilibrate);
    const SplitProgram sp = split(p, eq);
    const ConeAlgebra cones(sp.blocks);
    const NtOps nt(cones);
    KktSolver kkt(sp.ae, sp.g, nt);

    const Index n = sp.c.size();
    const Index pe = sp.be.size();
    const Index mi = sp.h.size();
    const VectorXd e = cones.identity();
    const double degree = static_cast<double>(cones.degree());

    // Starting point from two least-squares solves with W = I.
    NtScaling unit;
    unit.diag = VectorXd::Ones(mi);
    unit.eta.assign(sp.blocks.size(), 1.0);
    unit.wbar.resize(sp.blocks.size());
    for (std::size_t bi = 0; bi < sp.blocks.size(); ++bi) {
        if (sp.blocks[bi].kind == ConeKind::soc) {
            unit.wbar[bi] = VectorXd::Zero(sp.blocks[bi].size);
            unit.wbar[bi](0) = 1.0;
        }
    }
    kkt.factor(unit);
    VectorXd x, y, z, s;
    kkt.solve(VectorXd::Zero(n), sp.be, sp.h, x, y, s);
    s = -s;
    {
        VectorXd unused;
        kkt.solve(-sp.c, VectorXd::Zero(pe), VectorXd::Zero(mi), unused, y, z);
    }
    if (mi > 0) {
        const double ts = -cones.min_eig(s);
        if (ts >= -1e-8 * std::max(1.0, s.norm())) {
            s += (1.0 + ts) * e;
        }
        const double tz = -cones.min_eig(z);
        if (tz >= -1e-8 * std::max(1.0, z.norm())) {
            z += (1.0 + tz) * e;
        }
    }
    double tau = 1.0;
    double kappa = 1.0;

    ConeSolution best;
    best.status = Status::max_iters;
    double best_worst = std::numeric_limits<double>::infinity();
    bool certified = false;
    const int max_iters = std::min(opt.max_iters, 200);
    const double cnorm = std::max(1.0, sp.c.norm());
    const double hbnorm = std::max(1.0, std::hypot(sp.h.norm(), sp.be.norm()));

    for (int iter = 0; iter <= max_iters; ++iter) {
        const Unscaled cur = unscale(sp, eq, x, y, z, tau);
        ConeSolution sol;
        sol.x = cur.x;
        sol.z = cur.z;
        sol.iterations = iter;
        finalize(p, sol);
        if (worst(sol) < best_worst) {
            best_worst = worst(sol);
            best = sol;
        }
        if (converged(sol, opt.tol)) {
            certified = true;
            if (!(opt.polish_tol > 0.0 && opt.polish_tol < opt.tol) || converged(sol, opt.polish_tol)) {
                sol.status = Status::optimal;
                return sol;
            }
        }

        // Infeasibility certificates.
        const double hz_by = sp.h.dot(z) + sp.be.dot(y);
        if (hz_by < 0.0) {
            const double pinf = (sp.ae.transpose() * y + sp.g.transpose() * z).norm() / (-hz_by) * hbnorm / cnorm;
            if (!certified && pinf <= opt.tol && tau < kappa) {
                best.status = Status::infeasible_detected;
                best.iterations = iter;
                return best;
            }
        }
        const double cx = sp.c.dot(x);
        if (cx < 0.0) {
            const double dinf =
                std::hypot((sp.ae * x).norm(), (sp.g * x + s).norm()) / (-cx) * cnorm / hbnorm;
            if (!certified && dinf <= opt.tol && tau < kappa) {
                best.status = Status::infeasible_detected;
                best.iterations = iter;
                return best;
            }
        }
        if (iter == max_iters) {
            break;
        }

        const VectorXd rx = sp.ae.transpose() * y + sp.g.transpose() * z + sp.c * tau;
        const VectorXd ry = -sp.ae * x + sp.be * tau;
        const VectorXd rz = -sp.g * x + sp.h * tau - s;
        const double rt = kappa + sp.c.dot(x) + sp.be.dot(y) + sp.h.dot(z);
        const double mu = (s.dot(z) + tau * kappa) / (degree + 1.0);

        VectorXd lambda;
        const NtScaling w = (mi > 0) ? nt.compute(s, z, lambda) : unit;
        if (mi == 0) {
            lambda.resize(0);
        }
        kkt.factor(w);

        VectorXd vx, vy, vz;
        kkt.solve(-sp.c, sp.be, sp.h, vx, vy, vz);
        const double vden = sp.c.dot(vx) + sp.be.dot(vy) + sp.h.dot(vz) - kappa / tau;

        // Direction for complementarity target r_c and residual weight `keep`.
        struct Direction {
            VectorXd dx, dy, dz, ds;
            double dtau = 0.0;
            double dkappa = 0.0;
        };
        auto direction = [&](const VectorXd& rc, double rkc, double keep) {
            Direction d;
            const VectorXd xi = (mi > 0) ? cones.divide(lambda, rc) : VectorXd();
            const VectorXd wxi = (mi > 0) ? nt.apply(w, xi, false) : VectorXd();
            VectorXd ux, uy, uz;
            kkt.solve(-keep * rx, keep * ry, keep * rz - wxi, ux, uy, uz);
            d.dtau = (-keep * rt - sp.c.dot(ux) - sp.be.dot(uy) - sp.h.dot(uz) - rkc / tau) / vden;
            d.dx = ux + d.dtau * vx;
            d.dy = uy + d.dtau * vy;
            d.dz = uz + d.dtau * vz;
            if (mi > 0) {
                d.ds = nt.apply(w, VectorXd(xi - nt.apply(w, d.dz, false)), false);
            } else {
                d.ds.resize(0);
            }
            d.dkappa = (rkc - kappa * d.dtau) / tau;
            return d;
        };
        auto step_to_boundary = [&](const Direction& d) {
            double a = std::numeric_limits<double>::infinity();
            if (mi > 0) {
                a = std::min(cones.max_step(s, d.ds), cones.max_step(z, d.dz));
            }
            if (d.dtau < 0.0) a = std::min(a, -tau / d.dtau);
            if (d.dkappa < 0.0) a = std::min(a, -kappa / d.dkappa);
            return a;
        };

        const VectorXd lam2 = (mi > 0) ? cones.product(lambda, lambda) : VectorXd();
        const Direction aff = direction(-lam2, -tau * kappa, 1.0);
        const double alpha_aff = std::min(1.0, step_to_boundary(aff));
        const double sigma = std::pow(std::max(0.0, 1.0 - alpha_aff), 3);

        VectorXd rc;
        if (mi > 0) {
            const VectorXd ds_scaled = nt.apply(w, aff.ds, true);
            const VectorXd dz_scaled = nt.apply(w, aff.dz, false);
            rc = -lam2 + sigma * mu * e - cones.product(ds_scaled, dz_scaled);
        }
        const double rkc = -tau * kappa + sigma * mu - aff.dtau * aff.dkappa;
        const Direction cmb = direction(rc, rkc, 1.0 - sigma);
        const double alpha_max = step_to_boundary(cmb);
        const double alpha = std::min(1.0, 0.99 * alpha_max);
        if (!std::isfinite(alpha) || alpha < 1e-12 || !cmb.dx.allFinite()) {
            break;
        }

        x += alpha * cmb.dx;
        y += alpha * cmb.dy;
        z += alpha * cmb.dz;
        s += alpha * cmb.ds;
        tau += alpha * cmb.dtau;
        kappa += alpha * cmb.dkappa;
        if (tau <= 0.0 || kappa <= 0.0) {
            break;
        }
    }
    best.status = certified ? Status::optimal : Status::max_iters;
    return best;
}

// -- ADMM over the homogeneous self-dual embedding --

ConeSolution solve_admm(const ConeProgram& p, const SolveOptions& opt) {
    const Equilibration eq = ruiz(p, opt.equilibrate);
    const Index m = p.A.rows();
    const Index n = p.A.cols();
    const MatrixXd a = eq.row.asDiagonal() * p.A * eq.col.asDiagonal();
    const VectorXd b = eq.row.cwiseProduct(p.b);
    const VectorXd c = eq.col.cwiseProduct(p.c);

    MatrixXd normal = MatrixXd::Identity(n, n);
    normal.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
    const Eigen::LLT<MatrixXd> chol(normal);

    // (I + M)^{-1} [wx; wy] with M = [0 A'; -A 0].
    auto solve_m = [&](const VectorXd& wx, const VectorXd& wy, VectorXd& ox, VectorXd& oy) {
        ox = chol.solve(VectorXd(wx - a.transpose() * wy));
        oy = wy + a * ox;
    };
    VectorXd px, py;
    solve_m(c, b, px, py);
    const double hp = c.dot(px) + b.dot(py);

    VectorXd ux = VectorXd::Zero(n), uy = VectorXd::Zero(m);
    double ut = 1.0;
    VectorXd vx = VectorXd::Zero(n), vy = VectorXd::Zero(m);
    double vt = 1.0;

    ConeSolution best;
    best.status = Status::max_iters;
    double best_worst = std::numeric_limits<double>::infinity();
    const double alpha = opt.relaxation;

    auto check = [&](int iter) -> bool {
        if (ut <= 1e-14) {
            return false;
        }
        ConeSolution sol;
        sol.x = eq.col.cwiseProduct(ux) / ut;
        sol.z = eq.row.cwiseProduct(uy) / ut;
        sol.iterations = iter;
        finalize(p, sol);
        if (worst(sol) < best_worst) {
            best_worst = worst(sol);
            best = sol;
        }
        if (converged(sol, opt.tol)) {
            best = sol;
            best.status = Status::optimal;
            return true;
        }
        return false;
    };

    for (int iter = 1; iter <= opt.max_iters; ++iter) {
        const VectorXd wx = ux + vx;
        const VectorXd wy = uy + vy;
        const double wt = ut + vt;
        VectorXd qx, qy;
        solve_m(wx, wy, qx, qy);
        const double tt = (wt + c.dot(qx) + b.dot(qy)) / (1.0 + hp);
        const VectorXd tx = qx - tt * px;
        const VectorXd ty = qy - tt * py;

        const VectorXd rx = alpha * tx + (1.0 - alpha) * ux;
        const VectorXd ry = alpha * ty + (1.0 - alpha) * uy;
        const double rtau = alpha * tt + (1.0 - alpha) * ut;

        const VectorXd new_ux = rx - vx;
        const VectorXd new_uy = project_cone(p.cones, VectorXd(ry - vy), true);
        const double new_ut = std::max(0.0, rtau - vt);

        vx = vx - rx + new_ux;
        vy = vy - ry + new_uy;
        vt = vt - rtau + new_ut;
        ux = new_ux;
        uy = new_uy;
        ut = new_ut;

        if (iter % 10 == 0 || iter == opt.max_iters) {
            if (check(iter)) {
                return best;
            }
            // Certificates: with tau -> 0, uy certifies primal and ux dual infeasibility.
            if (ut < 1e-9 * std::max(1.0, vt)) {
                const double by = b.dot(uy);
                const double cxv = c.dot(ux);
                if (by < 0.0 && (a.transpose() * uy).norm() <= opt.tol * -by * 10.0) {
                    best.status = Status::infeasible_detected;
                    best.iterations = iter;
                    return best;
                }
                if (cxv < 0.0) {
                    const VectorXd sx = -a * ux;
                    const double viol = (sx - project_cone(p.cones, sx, false)).norm();
                    if (viol <= opt.tol * -cxv * 10.0) {
                        best.status = Status::infeasible_detected;
                        best.iterations = iter;
                        return best;
                    }
                }
            }
        }
    }
    best.status = Status::max_iters;
    return best;
}

}  // namespace

ConeSolution solve(const ConeProgram& p, const SolveOptions& options) {
    p.validate();
    if (!(options.tol > 0.0)) {
        throw InvalidArgument("solve: tolerance must be positive");
    }
    if (p.num_vars() == 0 || p.num_rows() == 0) {
        return trivial_solution(p);
    }
    switch (options.method) {
        case Method::admm: return solve_admm(p, options);
        case Method::interior_point: break;
    }
    return solve_interior_point(p, options);
}

ConeSolution solve(const ConeProgram& p, double tol, int max_iters) {
    SolveOptions options;
    options.tol = tol;
    options.max_iters = max_iters;
    return solve(p, options);
}

void write_program(std::ostream& out, const ConeProgram& p) {
    p.validate();
    out << "conic-program 1\n";
    out << "dims " << p.num_rows() << ' ' << p.num_vars() << '\n';
    for (const auto& cone : p.cones) {
        const char* kind = cone.kind == ConeKind::zero ? "zero" : cone.kind == ConeKind::nonnegative ? "nonneg" : "soc";
        out << "cone " << kind << ' ' << cone.size << '\n';
    }
    out << std::setprecision(17);
    for (std::size_t j = 0; j < p.var_names.size(); ++j) {
        out << "name " << j << ' ' << p.var_names[j] << '\n';
    }
    for (Index j = 0; j < p.c.size(); ++j) {
        if (p.c(j) != 0.0) out << "c " << j << ' ' << p.c(j) << '\n';
    }
    for (Index i = 0; i < p.b.size(); ++i) {
        if (p.b(i) != 0.0) out << "b " << i << ' ' << p.b(i) << '\n';
    }
    for (Index i = 0; i < p.A.rows(); ++i) {
        for (Index j = 0; j < p.A.cols(); ++j) {
            if (p.A(i, j) != 0.0) out << i << ' ' << j << ' ' << p.A(i, j) << '\n';
        }
    }
}

ConeProgram read_program(std::istream& in) {
    ConeProgram p;
    std::string line;
    if (!std::getline(in, line) || line.rfind("conic-program", 0) != 0) {
        throw ParseError("read_program: missing 'conic-program' header");
    }
    Index m = -1;
    Index n = -1;
    std::vector<std::pair<Index, std::string>> names;
    int lineno = 1;
    auto fail = [&](const std::string& why) {
        throw ParseError("read_program: line " + std::to_string(lineno) + ": " + why);
    };
    auto require_dims = [&] {
        if (m < 0) fail("entry before 'dims'");
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (head == "dims") {
            if (!(ls >> m >> n) || m < 0 || n < 0) fail("bad dims");
            p.A = MatrixXd::Zero(m, n);
            p.b = VectorXd::Zero(m);
            p.c = VectorXd::Zero(n);
        } else if (head == "cone") {
            std::string kind;
            std::size_t len = 0;
            if (!(ls >> kind >> len)) fail("bad cone line");
            if (kind == "zero") p.cones.push_back({ConeKind::zero, len});
            else if (kind == "nonneg") p.cones.push_back({ConeKind::nonnegative, len});
            else if (kind == "soc") p.cones.push_back({ConeKind::soc, len});
            else fail("unknown cone kind '" + kind + "'");
        } else if (head == "name") {
            Index j = 0;
            std::string label;
            if (!(ls >> j >> label)) fail("bad name line");
            names.emplace_back(j, label);
        } else if (head == "c" || head == "b") {
            require_dims();
            Index k = 0;
            double v = 0.0;
            if (!(ls >> k >> v)) fail("bad entry");
            VectorXd& target = head == "c" ? p.c : p.b;
            if (k < 0 || k >= target.size()) fail("index out of range");
            target(k) = v;
        } else {
            require_dims();
            Index i = 0;
            Index j = 0;
            double v = 0.0;
            std::istringstream ts(line);
            if (!(ts >> i >> j >> v)) fail("bad triplet");
            if (i < 0 || i >= m || j < 0 || j >= n) fail("triplet index out of range");
            p.A(i, j) = v;
        }
    }
    if (m < 0) {
        throw ParseError("read_program: missing 'dims' line");
    }
    if (!names.empty()) {
        p.var_names.assign(static_cast<std::size_t>(n), std::string());
        for (auto& [j, label] : names) {
            if (j < 0 || j >= n) throw ParseError("read_program: name index out of range");
            p.var_names[static_cast<std::size_t>(j)] = std::move(label);
        }
    }
    p.validate();
    return p;
}

}  // namespace voltkernel::conic
