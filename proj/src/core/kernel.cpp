#include "voltkernel/kernel.hpp"

#include "voltkernel/errors.hpp"
#include "program_builder.hpp"

#include <cmath>

namespace voltkernel {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(KernelKind kind) noexcept {
    switch (kind) {
        case KernelKind::linear: return "linear";
        case KernelKind::polynomial: return "polynomial";
        case KernelKind::gaussian: return "gaussian";
    }
    return "?";
}

KernelKind parse_kernel_kind(const std::string& s) {
    if (s == "linear") return KernelKind::linear;
    if (s == "polynomial") return KernelKind::polynomial;
    if (s == "gaussian") return KernelKind::gaussian;
    throw InvalidArgument("unknown kernel kind '" + s + "'");
}

void KernelSpec::validate() const {
    if (!(jitter >= 0) || !std::isfinite(jitter)) throw InvalidArgument("kernel jitter must be nonnegative");
    if (kind == KernelKind::gaussian && !(gamma > 0)) throw InvalidArgument("gaussian kernel needs gamma > 0");
    if (kind == KernelKind::polynomial) {
        if (!(gamma > 0)) throw InvalidArgument("polynomial kernel needs gamma > 0");
        if (beta < 1) throw InvalidArgument("polynomial kernel needs beta >= 1");
    }
}

double kernel_eval(const KernelSpec& spec, const VectorXd& z, const VectorXd& w) {
    if (z.size() != w.size()) throw DimensionError("kernel arguments differ in length");
    switch (spec.kind) {
        case KernelKind::linear: return z.dot(w);
        case KernelKind::polynomial: return std::pow(z.dot(w) + spec.gamma, spec.beta);
        case KernelKind::gaussian: return std::exp(-(z - w).squaredNorm() / spec.gamma);
    }
    return 0.0;
}

VectorXd kernel_vector(const KernelSpec& spec, const MatrixXd& Z, const VectorXd& z) {
    if (Z.rows() != z.size()) throw DimensionError("input length does not match the training inputs");
    VectorXd k(Z.cols());
    for (Index s = 0; s < Z.cols(); ++s) k(s) = kernel_eval(spec, z, Z.col(s));
    return k;
}

MatrixXd gram(const KernelSpec& spec, const MatrixXd& Z) {
    spec.validate();
    const Index S = Z.cols();
    MatrixXd K(S, S);
    for (Index i = 0; i < S; ++i)
        for (Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = kernel_eval(spec, Z.col(i), Z.col(j));
    K.diagonal().array() += spec.jitter;
    return K;
}

MatrixXd gram_sqrt(const MatrixXd& K) {
    if (K.rows() != K.cols()) throw DimensionError("gram_sqrt needs a square matrix");
    if (K.size() == 0) return K;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (K + K.transpose()));
    if (eig.info() != Eigen::Success) throw InvalidArgument("eigendecomposition failed");
    const double floor = -1e-9 * std::max(1.0, K.norm());
    if (eig.eigenvalues().minCoeff() < floor) throw InvalidArgument("gram matrix is indefinite");
    const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

GramSet build_grams(const std::vector<KernelSpec>& specs, const std::vector<MatrixXd>& Z) {
    if (specs.size() != Z.size()) throw DimensionError("one kernel spec per input matrix expected");
    GramSet g;
    for (std::size_t n = 0; n < Z.size(); ++n) {
        g.K.push_back(gram(specs[n], Z[n]));
        g.K_sqrt.push_back(gram_sqrt(g.K.back()));
    }
    return g;
}

RidgeFit kernel_ridge(const KernelSpec& spec, const MatrixXd& Z, const VectorXd& y, double mu,
                      const conic::SolveOptions& options) {
    const Index S = Z.cols();
    if (S < 2) throw InvalidArgument("kernel_ridge needs at least two samples");
    if (y.size() != S) throw DimensionError("one target per input column expected");
    if (!(mu >= 0)) throw InvalidArgument("mu must be nonnegative");
    const MatrixXd K = gram(spec, Z);

    detail::ProgramBuilder pb;
    const Index a0 = pb.add_vars(S, "a");
    const Index b = pb.add_var("b");
    const Index t = pb.add_var("t");
    pb.set_cost(t, 1.0 / static_cast<double>(S));

    std::vector<detail::Affine> resid;
    for (Index s = 0; s < S; ++s) {
        detail::Affine r(y(s));
        for (Index j = 0; j < S; ++j) r.add(a0 + j, -K(s, j));
        r.add(b, -1.0);
        resid.push_back(std::move(r));
    }
    pb.add_cone(conic::ConeKind::soc, detail::squared_norm_epigraph(resid, t));

    if (mu > 0) {
        const MatrixXd L = gram_sqrt(K);
        const Index g = pb.add_var("gamma");
        pb.set_cost(g, mu);
        std::vector<detail::Affine> rows{detail::Affine().add(g, 1.0)};
        for (Index i = 0; i < S; ++i) {
            detail::Affine r;
            for (Index j = 0; j < S; ++j) r.add(a0 + j, L(i, j));
            rows.push_back(std::move(r));
        }
        pb.add_cone(conic::ConeKind::soc, std::move(rows));
    }

    RidgeFit fit;
    fit.solution = conic::solve(pb.build(), options);
    if (fit.solution.status != conic::Status::optimal)
        throw SolverError(std::string("kernel_ridge: solver returned ") + conic::to_string(fit.solution.status),
                          fit.solution.primal_res, fit.solution.dual_res, fit.solution.gap);
    fit.a = fit.solution.x.segment(a0, S);
    fit.b = fit.solution.x(b);
    fit.fitted = K * fit.a + VectorXd::Constant(S, fit.b);
    return fit;
}

}  // namespace voltkernel
