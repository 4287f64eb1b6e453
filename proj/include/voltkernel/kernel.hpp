#pragma once

#include "voltkernel/conic.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace voltkernel {

enum class KernelKind { linear, polynomial, gaussian };

const char* to_string(KernelKind kind) noexcept;
KernelKind parse_kernel_kind(const std::string& s);

struct KernelSpec {
    KernelKind kind = KernelKind::gaussian;
    double gamma = 1.0;  // gaussian width / polynomial offset
    int beta = 2;        // polynomial degree
    double jitter = 1e-3;

    void validate() const;
    bool operator==(const KernelSpec&) const = default;
};

/// linear: z'w;  polynomial: (z'w + gamma)^beta;  gaussian: exp(-||z - w||^2 / gamma).
double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& z, const Eigen::VectorXd& w);

/// Entries K(z, Z.col(s)) for every training column s.
Eigen::VectorXd kernel_vector(const KernelSpec& spec, const Eigen::MatrixXd& Z, const Eigen::VectorXd& z);

/// Pairwise kernel values over the columns of Z plus jitter * I.
Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& Z);

/// Symmetric square root L (L'L = K) via eigendecomposition. Eigenvalues
/// above -1e-9 * max(1, ||K||) are clipped at zero; anything more negative
/// raises InvalidArgument.
Eigen::MatrixXd gram_sqrt(const Eigen::MatrixXd& K);

struct GramSet {
    std::vector<Eigen::MatrixXd> K;
    std::vector<Eigen::MatrixXd> K_sqrt;
};

GramSet build_grams(const std::vector<KernelSpec>& specs, const std::vector<Eigen::MatrixXd>& Z);

struct RidgeFit {
    Eigen::VectorXd a;
    double b = 0.0;
    Eigen::VectorXd fitted;  // K a + b 1
    conic::ConeSolution solution;
};

/// minimize (1/S) ||y - K a - b 1||^2 + mu ||K^{1/2} a||  (non-squared penalty).
RidgeFit kernel_ridge(const KernelSpec& spec, const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double mu,
                      const conic::SolveOptions& options = {});

}  // namespace voltkernel
