#pragma once

#include <Eigen/Dense>
#include <utility>

#include "nlkf/systems.hpp"
#include "nlkf/types.hpp"

namespace nlkf {

class MomentPropagator;

// K solving K S = P_xy via a symmetric-PD solve.
Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& P_xy, const Eigen::MatrixXd& S);

// x_pred + K residual.
Eigen::VectorXd update_state(const Eigen::VectorXd& x_pred, const Eigen::MatrixXd& K,
                             const Eigen::VectorXd& residual);

// P_pred - K S_pred K^T, symmetrized. Valid only when K was formed from
// the same predicted moments.
Eigen::MatrixXd conventional_cov_update(const Eigen::MatrixXd& P_pred, const Eigen::MatrixXd& K,
                                        const Eigen::MatrixXd& S_pred);

// P_pred + K S_eval K^T - P_xy_eval K^T - K P_xy_eval^T, symmetrized.
// Reduces to the conventional update when the evaluation moments equal
// the gain-forming ones.
Eigen::MatrixXd general_cov_update(const Eigen::MatrixXd& P_pred, const Eigen::MatrixXd& K,
                                   const Eigen::MatrixXd& S_eval, const Eigen::MatrixXd& P_xy_eval);

// Keeps the candidate unless its covariance trace strictly exceeds the
// prior's, in which case the prior is restored and the flag set.
std::pair<StateBelief, bool> backout_if_worse(const StateBelief& prior, const StateBelief& candidate);

// One full predict / update / (recalibrate + back-out) step at step index
// k with measurement noise covariance R.
StepRecord run_step(const SystemSpec& model, const MomentPropagator& prop, FrameworkMode mode,
                    const StateBelief& belief, const Eigen::VectorXd& u, const Eigen::VectorXd& z,
                    int k, const Eigen::MatrixXd& R);

}  // namespace nlkf
