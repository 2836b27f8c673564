#pragma once

#include <Eigen/Dense>

namespace nlkf {

// (P + P^T) / 2. Applied after every covariance write.
Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& P);

// Lower-triangular Cholesky factor of a symmetric matrix. If the plain
// factorization fails, retries with diagonal jitter 1e-12, 1e-9, 1e-6
// times trace(P)/n, then throws CholeskyFailure.
Eigen::MatrixXd conditioned_cholesky(const Eigen::MatrixXd& P);

// Solves X * S = B for X with S symmetric positive definite (S is never
// inverted explicitly). Throws SingularInnovation when S cannot be
// factorized even after jitter.
Eigen::MatrixXd solve_spd_right(const Eigen::MatrixXd& S, const Eigen::MatrixXd& B);

}  // namespace nlkf
