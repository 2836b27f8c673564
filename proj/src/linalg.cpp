#include "nlkf/linalg.hpp"

#include <Eigen/Cholesky>

#include "nlkf/errors.hpp"

namespace nlkf {

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& P) {
    return 0.5 * (P + P.transpose());
}

namespace {

// Jitter ladder relative to trace(P)/n.
constexpr double kJitterScales[] = {0.0, 1e-12, 1e-9, 1e-6};

template <typename OnFactor>
auto with_jitter(const Eigen::MatrixXd& P, OnFactor&& on_factor) {
    const Eigen::Index n = P.rows();
    const double unit = P.trace() / static_cast<double>(n);
    const double base = unit > 0.0 ? unit : 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt;
    for (double scale : kJitterScales) {
        Eigen::MatrixXd Pj = P;
        if (scale > 0.0) Pj += scale * base * Eigen::MatrixXd::Identity(n, n);
        llt.compute(Pj);
        if (llt.info() == Eigen::Success) return on_factor(llt);
    }
    throw CholeskyFailure("symmetric-PD factorization failed after jitter escalation");
}

}  // namespace

Eigen::MatrixXd conditioned_cholesky(const Eigen::MatrixXd& P) {
    const Eigen::MatrixXd Ps = symmetrized(P);
    return with_jitter(Ps, [](const Eigen::LLT<Eigen::MatrixXd>& llt) {
        return Eigen::MatrixXd(llt.matrixL());
    });
}

Eigen::MatrixXd solve_spd_right(const Eigen::MatrixXd& S, const Eigen::MatrixXd& B) {
    if (S.rows() != S.cols() || B.cols() != S.rows())
        throw DimensionMismatch("solve_spd_right: incompatible dimensions");
    const Eigen::MatrixXd Ss = symmetrized(S);
    try {
        // X S = B  <=>  S X^T = B^T (S symmetric).
        return with_jitter(Ss, [&](const Eigen::LLT<Eigen::MatrixXd>& llt) {
            return Eigen::MatrixXd(llt.solve(B.transpose()).transpose());
        });
    } catch (const CholeskyFailure& e) {
        throw SingularInnovation(e.what());
    }
}

}  // namespace nlkf
