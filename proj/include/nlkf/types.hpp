#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "nlkf/linalg.hpp"

namespace nlkf {

// Gaussian state estimate. The covariance is symmetrized on every write.
struct StateBelief {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    StateBelief() = default;
    StateBelief(Eigen::VectorXd m, const Eigen::MatrixXd& P)
        : mean(std::move(m)), cov(symmetrized(P)) {}

    void set_cov(const Eigen::MatrixXd& P) { cov = symmetrized(P); }
    Eigen::Index dim() const { return mean.size(); }
};

// Predicted measurement mean and the covariances approximated at a chosen
// linearization point. S = P_y + R by construction.
struct MeasurementMoments {
    Eigen::VectorXd y_hat;
    Eigen::MatrixXd P_y;
    Eigen::MatrixXd P_xy;
    Eigen::MatrixXd S;
};

// Opaque step-local payload a propagator carries from the update-point
// moment evaluation into the recalibration. Only the UKF uses it (its
// recalibration shifts the update-step sigma set instead of redrawing).
struct Carryover {
    std::vector<Eigen::VectorXd> sigma_points;
    Eigen::VectorXd y_hat;
    Eigen::MatrixXd chol_factor;  // L of P_{k|k-1}, reused by the CKF redraw
};

enum class FrameworkMode { Conventional, Recalibrated };

// Everything one filter step produced.
struct StepRecord {
    StateBelief prior;      // k|k-1
    StateBelief posterior;  // k|k
    Eigen::MatrixXd gain;
    Eigen::VectorXd residual;
    MeasurementMoments moments_pred;
    std::optional<MeasurementMoments> moments_recal;
    bool backed_out = false;
};

}  // namespace nlkf
