#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace voltkernel::conic {

enum class ConeKind { zero, nonnegative, soc };

struct Cone {
    ConeKind kind;
    std::size_t size;
};

/// Conic program in the form
///
///     minimize  c'x   subject to  A x + s = b,  s in K
///
/// where K is the product of `cones` taken over consecutive rows of A. The
/// dual is  maximize -b'z  subject to  A'z + c = 0,  z in K*.
struct ConeProgram {
    Eigen::VectorXd c;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::vector<Cone> cones;
    std::vector<std::string> var_names;

    std::size_t num_vars() const { return static_cast<std::size_t>(c.size()); }
    std::size_t num_rows() const { return static_cast<std::size_t>(b.size()); }

    /// Throws DimensionError if the blocks do not partition the rows of A.
    void validate() const;
};

enum class Status { optimal, max_iters, infeasible_detected };

const char* to_string(Status status) noexcept;

struct Residuals {
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;
};

struct ConeSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd z;
    Eigen::VectorXd s;
    Status status = Status::max_iters;
    double primal_res = 0.0;
    double dual_res = 0.0;
    double gap = 0.0;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    int iterations = 0;
};

enum class Method {
    // Homogeneous self-dual primal-dual interior point with Nesterov-Todd
    // scaling and Mehrotra correction.
    interior_point,
    // Operator splitting (ADMM) over the homogeneous self-dual embedding.
    admm,
};

struct SolveOptions {
    double tol = 1e-7;
    // Interior point only: once `tol` is met, keep iterating toward this
    // tighter target and return the most accurate certified iterate.
    // Zero disables polishing.
    double polish_tol = 0.0;
    int max_iters = 50000;
    Method method = Method::interior_point;
    bool equilibrate = true;
    // ADMM relaxation parameter in (0, 2).
    double relaxation = 1.5;
};

/// Euclidean projection of (x, t) onto {(x, t) : ||x|| <= t}.
std::pair<Eigen::VectorXd, double> project_soc(const Eigen::VectorXd& x, double t);

/// Projects `v` onto the product cone K (dual = false) or K* (dual = true).
/// K is self-dual except for the zero cone, whose dual is the whole space.
Eigen::VectorXd project_cone(const std::vector<Cone>& cones, const Eigen::VectorXd& v, bool dual);

/// KKT residuals of a primal/dual pair, scaled by 1 + ||b|| (primal) and
/// 1 + ||c|| (dual). The gap is |c'x + b'z| / (1 + |c'x| + |b'z|).
Residuals residuals(const ConeProgram& p, const Eigen::VectorXd& x, const Eigen::VectorXd& z);

ConeSolution solve(const ConeProgram& p, const SolveOptions& options);
ConeSolution solve(const ConeProgram& p, double tol = 1e-7, int max_iters = 50000);

/// Plain-text dump: a header, cone descriptor lines and `row col value`
/// triplets for A. Reading back yields an identical program.
void write_program(std::ostream& out, const ConeProgram& p);
ConeProgram read_program(std::istream& in);

}  // namespace voltkernel::conic
