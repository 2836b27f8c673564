#include <doctest.h>

#include <Eigen/Dense>

#include "nlkf/errors.hpp"
#include "nlkf/linalg.hpp"

using namespace nlkf;

TEST_CASE("symmetrized averages the matrix with its transpose") {
    Eigen::MatrixXd A(2, 2);
    A << 1.0, 2.0, 4.0, 3.0;
    const Eigen::MatrixXd S = symmetrized(A);
    CHECK(S(0, 1) == 3.0);
    CHECK(S(1, 0) == 3.0);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conditioned_cholesky reproduces an exact factor") {
    Eigen::MatrixXd L0(2, 2);
    L0 << 2.0, 0.0, 1.0, 3.0;
    const Eigen::MatrixXd P = L0 * L0.transpose();
    const Eigen::MatrixXd L = conditioned_cholesky(P);
    CHECK((L * L.transpose() - P).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(L(0, 1) == 0.0);  // lower triangular
}

TEST_CASE("conditioned_cholesky rescues a slightly indefinite matrix with jitter") {
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(3, 3);
    P(2, 2) = -1e-14;  // tiny negative eigenvalue from round-off
    const Eigen::MatrixXd L = conditioned_cholesky(P);
    CHECK((L * L.transpose() - P).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("conditioned_cholesky fails on a genuinely indefinite matrix") {
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(2, 2);
    P(1, 1) = -1.0;
    CHECK_THROWS_AS(conditioned_cholesky(P), CholeskyFailure);
}

TEST_CASE("solve_spd_right solves X S = B without inverting S") {
    Eigen::MatrixXd S(2, 2);
    S << 4.0, 1.0, 1.0, 3.0;
    Eigen::MatrixXd B(3, 2);
    B << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
    const Eigen::MatrixXd X = solve_spd_right(S, B);
    CHECK((X * S - B).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("solve_spd_right throws SingularInnovation on an unusable S") {
    Eigen::MatrixXd S(1, 1);
    S << -1.0;
    CHECK_THROWS_AS(solve_spd_right(S, Eigen::MatrixXd::Ones(1, 1)), SingularInnovation);
}
