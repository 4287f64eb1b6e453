#include <doctest.h>

#include "voltkernel/errors.hpp"
#include "voltkernel/kernel.hpp"

#include <cmath>
#include <random>

using namespace voltkernel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd M(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) M(i, j) = g(rng);
    return M;
}

KernelSpec spec_of(KernelKind kind, double jitter = 1e-3) {
    KernelSpec s;
    s.kind = kind;
    s.gamma = 2.0;
    s.beta = 3;
    s.jitter = jitter;
    return s;
}

}  // namespace

TEST_CASE("kernel evaluation closed forms") {
    KernelSpec g = spec_of(KernelKind::gaussian);
    g.gamma = 1.0;
    CHECK(kernel_eval(g, Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 0)) == 1.0);
    CHECK(kernel_eval(g, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == doctest::Approx(std::exp(-2.0)));
    CHECK(kernel_eval(g, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == doctest::Approx(0.13534).epsilon(1e-4));
    CHECK(kernel_eval(spec_of(KernelKind::linear), Eigen::Vector2d(1, 2), Eigen::Vector2d(3, 4)) == 11.0);
    CHECK(kernel_eval(spec_of(KernelKind::polynomial), Eigen::Vector2d(1, 2), Eigen::Vector2d(3, 4)) ==
          doctest::Approx(std::pow(13.0, 3)));
    CHECK_THROWS_AS(kernel_eval(g, Eigen::Vector2d(1, 0), Eigen::Vector3d(1, 0, 0)), DimensionError);

    KernelSpec bad = g;
    bad.gamma = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = spec_of(KernelKind::polynomial);
    bad.beta = 0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK(parse_kernel_kind("gaussian") == KernelKind::gaussian);
    CHECK_THROWS_AS(parse_kernel_kind("rbf"), InvalidArgument);
}

TEST_CASE("gram matrices") {
    std::mt19937_64 rng(4);
    SUBCASE("orthonormal columns under the linear kernel give the identity") {
        const MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(random_matrix(rng, 5, 5)).householderQ();
        const MatrixXd K = gram(spec_of(KernelKind::linear, 0.0), Q.leftCols(3));
        CHECK((K - MatrixXd::Identity(3, 3)).norm() <= 1e-14);
    }
    SUBCASE("singleton") {
        const MatrixXd z = random_matrix(rng, 3, 1);
        for (KernelKind k : {KernelKind::linear, KernelKind::polynomial, KernelKind::gaussian}) {
            const KernelSpec s = spec_of(k);
            const MatrixXd K = gram(s, z);
            CHECK(K.rows() == 1);
            CHECK(K(0, 0) == kernel_eval(s, z.col(0), z.col(0)) + s.jitter);
        }
    }
    SUBCASE("symmetric and jitter-bounded spectrum for every kind") {
        for (KernelKind k : {KernelKind::linear, KernelKind::polynomial, KernelKind::gaussian})
            for (int trial = 0; trial < 10; ++trial) {
                const KernelSpec s = spec_of(k);
                const MatrixXd K = gram(s, random_matrix(rng, 3, 5));
                CHECK((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
                const double lo = Eigen::SelfAdjointEigenSolver<MatrixXd>(K).eigenvalues().minCoeff();
                CHECK(lo >= s.jitter - 1e-9 * std::max(1.0, K.norm()));
            }
    }
    SUBCASE("linear kernel equals Z'Z plus jitter") {
        const MatrixXd Z = random_matrix(rng, 4, 7);
        const MatrixXd K = gram(spec_of(KernelKind::linear), Z);
        const MatrixXd ref = Z.transpose() * Z + 1e-3 * MatrixXd::Identity(7, 7);
        CHECK((K - ref).cwiseAbs().maxCoeff() <= 1e-14 * ref.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("gram square roots") {
    CHECK((gram_sqrt(MatrixXd::Identity(4, 4)) - MatrixXd::Identity(4, 4)).norm() <= 1e-14);
    const MatrixXd D = Eigen::Vector2d(4, 9).asDiagonal();
    const MatrixXd L = gram_sqrt(D);
    CHECK((L.transpose() * L - D).norm() <= 1e-12);

    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const MatrixXd B = random_matrix(rng, 10, 6);  // rank deficient
        const MatrixXd K = B * B.transpose();
        const MatrixXd R = gram_sqrt(K);
        CHECK((R.transpose() * R - K).norm() <= 1e-9 * K.norm());
    }
    MatrixXd indefinite = MatrixXd::Identity(2, 2);
    indefinite(1, 1) = -1.0;
    CHECK_THROWS_AS(gram_sqrt(indefinite), InvalidArgument);
}

TEST_CASE("representer evaluation reproduces K a at training inputs") {
    std::mt19937_64 rng(12);
    for (KernelKind k : {KernelKind::linear, KernelKind::polynomial, KernelKind::gaussian}) {
        const KernelSpec s = spec_of(k, 0.0);
        const MatrixXd Z = random_matrix(rng, 3, 8);
        const VectorXd a = random_matrix(rng, 8, 1);
        const VectorXd Ka = gram(s, Z) * a;
        for (int i = 0; i < 8; ++i) {
            const double f = kernel_vector(s, Z, Z.col(i)).dot(a);
            CHECK(std::abs(f - Ka(i)) <= 1e-12 * std::max(1.0, std::abs(Ka(i))));
        }
    }
}

TEST_CASE("kernel ridge") {
    std::mt19937_64 rng(21);
    const MatrixXd Z = random_matrix(rng, 3, 12);
    SUBCASE("constant target is absorbed by the intercept") {
        const RidgeFit fit = kernel_ridge(spec_of(KernelKind::gaussian), Z, VectorXd::Constant(12, 0.7), 10.0);
        CHECK(fit.a.cwiseAbs().maxCoeff() <= 1e-6);
        CHECK(fit.b == doctest::Approx(0.7).epsilon(1e-6));
    }
    SUBCASE("exactly linear targets are interpolated without regularization") {
        const Eigen::Vector3d w(0.5, -1.0, 2.0);
        const VectorXd y = (Z.transpose() * w).array() + 0.3;
        const RidgeFit fit = kernel_ridge(spec_of(KernelKind::linear), Z, y, 0.0);
        CHECK((fit.fitted - y).norm() <= 1e-6);
    }
    SUBCASE("the penalized norm shrinks as mu grows") {
        const VectorXd y = random_matrix(rng, 12, 1);
        const KernelSpec s = spec_of(KernelKind::gaussian);
        const MatrixXd L = gram_sqrt(gram(s, Z));
        double prev = INFINITY;
        for (double mu : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
            const RidgeFit fit = kernel_ridge(s, Z, y, mu);
            const double norm = (L * fit.a).norm();
            CHECK(norm <= prev + 1e-6);
            prev = norm;
        }
        CHECK(prev <= 1e-6);  // mu = 1 already exceeds the data's pull
    }
    CHECK_THROWS_AS(kernel_ridge(spec_of(KernelKind::linear), Z.leftCols(1), VectorXd::Zero(1), 0.0), InvalidArgument);
}
