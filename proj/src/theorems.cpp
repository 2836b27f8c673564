#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nlkf/harness.hpp"
#include "nlkf/linalg.hpp"
#include "nlkf/philox.hpp"

namespace nlkf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Marsaglia-Tsang gamma(shape, 1) sampler; valid for shape >= 1.
double gamma_draw(RandomStream& rs, double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rs.next_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rs.next_uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

double chi2_draw(RandomStream& rs, double dof) { return 2.0 * gamma_draw(rs, 0.5 * dof); }

// Wishart(dof, S/dof) via the Bartlett decomposition, so E[draw] = S.
MatrixXd wishart_mean_s(RandomStream& rs, const MatrixXd& L_of_S, int dof) {
    const Eigen::Index n = L_of_S.rows();
    MatrixXd A = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        A(i, i) = std::sqrt(chi2_draw(rs, static_cast<double>(dof - i)));
        for (Eigen::Index j = 0; j < i; ++j) A(i, j) = rs.next_normal();
    }
    const MatrixXd LA = L_of_S * A;
    return LA * LA.transpose() / static_cast<double>(dof);
}

MatrixXd normal_perturbation(RandomStream& rs, const MatrixXd& base, double scale) {
    if (scale == 0.0) return base;
    MatrixXd out = base;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += scale * rs.next_normal();
    return out;
}

double min_eigenvalue(const MatrixXd& M) {
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(symmetrized(M), Eigen::EigenvaluesOnly)
        .eigenvalues()
        .minCoeff();
}

double spectral_norm_sym(const MatrixXd& M) {
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(symmetrized(M), Eigen::EigenvaluesOnly)
        .eigenvalues()
        .cwiseAbs()
        .maxCoeff();
}

// Leave-one-out jackknife standard error of statistic(mean of draws).
template <typename Stat>
double jackknife_stderr(const std::vector<MatrixXd>& draws, const MatrixXd& sum, Stat&& stat) {
    const auto n = static_cast<double>(draws.size());
    std::vector<double> loo(draws.size());
    for (size_t i = 0; i < draws.size(); ++i) loo[i] = stat((sum - draws[i]) / (n - 1.0));
    double mean = 0.0;
    for (double v : loo) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    return std::sqrt((n - 1.0) / n * ss);
}

}  // namespace

Theorem1Result theorem1_check(const MatrixXd& P_xy, const MatrixXd& S, double noise_scale, int dof,
                              int samples, std::uint64_t seed) {
    RandomStream rs(seed, fnv1a32("theorem1"), 0, 0);
    const MatrixXd L = conditioned_cholesky(S);
    const Eigen::Index n_x = P_xy.rows();

    std::vector<MatrixXd> gaps;
    gaps.reserve(static_cast<size_t>(samples));
    MatrixXd sum = MatrixXd::Zero(n_x, n_x);
    for (int i = 0; i < samples; ++i) {
        const MatrixXd S_est = dof > 0 ? wishart_mean_s(rs, L, dof) : S;
        const MatrixXd P_est_xy = normal_perturbation(rs, P_xy, noise_scale);
        const MatrixXd K = solve_spd_right(S_est, P_est_xy);  // P~ S~^-1
        // P_est drops K S~ K^T; P_ac applies the true S and P_xy to the
        // same gain. The shared prior covariance cancels in the gap.
        const MatrixXd est = -K * P_est_xy.transpose();
        const MatrixXd ac =
            K * S * K.transpose() - P_xy * K.transpose() - K * P_xy.transpose();
        MatrixXd gap = symmetrized(ac - est);
        sum += gap;
        gaps.push_back(std::move(gap));
    }

    Theorem1Result out;
    out.mean_gap = sum / static_cast<double>(samples);
    out.min_eig = min_eigenvalue(out.mean_gap);
    out.stderr_min_eig = jackknife_stderr(gaps, sum, [](const MatrixXd& m) { return min_eigenvalue(m); });
    return out;
}

Theorem2Result theorem2_check(const MatrixXd& P_xy, const MatrixXd& S, double noise_scale, int dof,
                              int samples, std::uint64_t seed, bool correlated) {
    RandomStream rs(seed, fnv1a32("theorem2"), 0, 0);
    const MatrixXd L = conditioned_cholesky(S);
    const Eigen::Index n_x = P_xy.rows();

    std::vector<MatrixXd> draws;
    draws.reserve(static_cast<size_t>(samples));
    MatrixXd sum = MatrixXd::Zero(n_x, n_x);
    for (int i = 0; i < samples; ++i) {
        const MatrixXd S1 = dof > 0 ? wishart_mean_s(rs, L, dof) : S;
        const MatrixXd P1 = normal_perturbation(rs, P_xy, noise_scale);
        const MatrixXd S2 = correlated ? S1 : (dof > 0 ? wishart_mean_s(rs, L, dof) : S);
        const MatrixXd P2 = correlated ? P1 : normal_perturbation(rs, P_xy, noise_scale);
        const MatrixXd K = solve_spd_right(S1, P1);
        const MatrixXd p_new =
            K * S2 * K.transpose() - P2 * K.transpose() - K * P2.transpose();
        const MatrixXd p_ac =
            K * S * K.transpose() - P_xy * K.transpose() - K * P_xy.transpose();
        MatrixXd bias = symmetrized(p_new - p_ac);
        sum += bias;
        draws.push_back(std::move(bias));
    }

    Theorem2Result out;
    out.mean_bias = sum / static_cast<double>(samples);
    out.norm = spectral_norm_sym(out.mean_bias);
    out.stderr_norm = jackknife_stderr(draws, sum, [](const MatrixXd& m) { return spectral_norm_sym(m); });
    return out;
}

}  // namespace nlkf
