#include "nlkf/filter_core.hpp"

#include "nlkf/errors.hpp"
#include "nlkf/linalg.hpp"
#include "nlkf/propagators.hpp"

namespace nlkf {

Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& P_xy, const Eigen::MatrixXd& S) {
    if (P_xy.cols() != S.rows()) throw DimensionMismatch("kalman_gain: P_xy vs S");
    return solve_spd_right(S, P_xy);
}

Eigen::VectorXd update_state(const Eigen::VectorXd& x_pred, const Eigen::MatrixXd& K,
                             const Eigen::VectorXd& residual) {
    if (K.rows() != x_pred.size() || K.cols() != residual.size())
        throw DimensionMismatch("update_state: K vs x_pred/residual");
    return x_pred + K * residual;
}

Eigen::MatrixXd conventional_cov_update(const Eigen::MatrixXd& P_pred, const Eigen::MatrixXd& K,
                                        const Eigen::MatrixXd& S_pred) {
    if (K.rows() != P_pred.rows() || K.cols() != S_pred.rows())
        throw DimensionMismatch("conventional_cov_update");
    return symmetrized(P_pred - K * S_pred * K.transpose());
}

Eigen::MatrixXd general_cov_update(const Eigen::MatrixXd& P_pred, const Eigen::MatrixXd& K,
                                   const Eigen::MatrixXd& S_eval, const Eigen::MatrixXd& P_xy_eval) {
    if (K.rows() != P_pred.rows() || K.cols() != S_eval.rows() ||
        P_xy_eval.rows() != P_pred.rows() || P_xy_eval.cols() != K.cols())
        throw DimensionMismatch("general_cov_update");
    const Eigen::MatrixXd KP = K * P_xy_eval.transpose();
    return symmetrized(P_pred + K * S_eval * K.transpose() - KP.transpose() - KP);
}

std::pair<StateBelief, bool> backout_if_worse(const StateBelief& prior, const StateBelief& candidate) {
    if (prior.dim() != candidate.dim()) throw DimensionMismatch("backout_if_worse");
    if (candidate.cov.trace() > prior.cov.trace()) return {prior, true};
    return {candidate, false};
}

StepRecord run_step(const SystemSpec& model, const MomentPropagator& prop, FrameworkMode mode,
                    const StateBelief& belief, const Eigen::VectorXd& u, const Eigen::VectorXd& z,
                    int k, const Eigen::MatrixXd& R) {
    StepRecord rec;
    rec.prior = prop.predict(model, belief, u, k);

    Carryover carry;
    rec.moments_pred = prop.measurement_moments(model, rec.prior.mean, rec.prior.cov, k, R, &carry);
    rec.residual = z - rec.moments_pred.y_hat;
    rec.gain = kalman_gain(rec.moments_pred.P_xy, rec.moments_pred.S);

    StateBelief candidate;
    candidate.mean = update_state(rec.prior.mean, rec.gain, rec.residual);

    if (mode == FrameworkMode::Conventional) {
        candidate.set_cov(conventional_cov_update(rec.prior.cov, rec.gain, rec.moments_pred.S));
        rec.posterior = std::move(candidate);
        rec.backed_out = false;
        return rec;
    }

    rec.moments_recal = prop.recalibrate_moments(model, candidate.mean, rec.prior.cov, carry,
                                                 rec.gain, rec.residual, k, R);
    candidate.set_cov(general_cov_update(rec.prior.cov, rec.gain, rec.moments_recal->S,
                                         rec.moments_recal->P_xy));
    auto [posterior, backed_out] = backout_if_worse(rec.prior, candidate);
    rec.posterior = std::move(posterior);
    rec.backed_out = backed_out;
    return rec;
}

}  // namespace nlkf
