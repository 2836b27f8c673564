#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "nlkf/systems.hpp"
#include "nlkf/types.hpp"

namespace nlkf {

// Strategy producing predicted beliefs and measurement moments at an
// arbitrary linearization point. Stateless between calls; the Carryover
// lives only within one filter step.
class MomentPropagator {
public:
    virtual ~MomentPropagator() = default;
    virtual std::string id() const = 0;

    virtual StateBelief predict(const SystemSpec& model, const StateBelief& belief,
                                const Eigen::VectorXd& u, int k) const = 0;

    // Moments of the predicted measurement approximated at `point` with
    // state covariance P_pred, including S = P_y + R.
    virtual MeasurementMoments measurement_moments(const SystemSpec& model,
                                                   const Eigen::VectorXd& point,
                                                   const Eigen::MatrixXd& P_pred, int k,
                                                   const Eigen::MatrixXd& R,
                                                   Carryover* carry = nullptr) const = 0;

    // Re-approximation at the updated mean. EKF/EKF2/CKF ignore the sigma
    // carryover and re-approximate; the UKF shifts its carried sigma set
    // by K residual without re-factorizing.
    virtual MeasurementMoments recalibrate_moments(const SystemSpec& model,
                                                   const Eigen::VectorXd& x_upd,
                                                   const Eigen::MatrixXd& P_pred,
                                                   const Carryover& carry, const Eigen::MatrixXd& K,
                                                   const Eigen::VectorXd& residual, int k,
                                                   const Eigen::MatrixXd& R) const = 0;
};

struct UkfWeights {
    double lambda = 0.0;
    Eigen::VectorXd w_mean;  // length 2 n_x + 1
    Eigen::VectorXd w_cov;
};

// lambda = alpha^2 (n_x + kappa) - n_x and the matching weight vectors.
// Throws DegenerateScaling when n_x + lambda <= 0.
UkfWeights ukf_weights(int n_x, double alpha, double beta, double kappa);

struct UkfParams {
    double alpha = 1e-3;
    double beta = 2.0;
    double kappa = 0.0;
};

class EkfPropagator final : public MomentPropagator {
public:
    std::string id() const override { return "ekf"; }
    StateBelief predict(const SystemSpec&, const StateBelief&, const Eigen::VectorXd&, int) const override;
    MeasurementMoments measurement_moments(const SystemSpec&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                           int, const Eigen::MatrixXd&, Carryover*) const override;
    MeasurementMoments recalibrate_moments(const SystemSpec&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                           const Carryover&, const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                           int, const Eigen::MatrixXd&) const override;
};

class Ekf2Propagator final : public MomentPropagator {
public:
    std::string id() const override { return "ekf2"; }
    StateBelief predict(const SystemSpec&, const StateBelief&, const Eigen::VectorXd&, int) const override;
    MeasurementMoments measurement_moments(const SystemSpec&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                           int, const Eigen::MatrixXd&, Carryover*) const override;
    MeasurementMoments recalibrate_moments(const SystemSpec&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                           const Carryover&, const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                           int, const Eigen::MatrixXd&) const override;
};

class UkfPropagator final : public MomentPropagator {
public:
    explicit UkfPropagator(UkfParams params = {}) : params_(params) {}
    std::string id() const override { return "ukf"; }
    StateBelief predict(const SystemSpec&, const StateBelief&, const Eigen::VectorXd&, int) const override;
    MeasurementMoments measurement_moments(const SystemSpec&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                           int, const Eigen::MatrixXd&, Carryover*) const override;
    MeasurementMoments recalibrate_moments(const SystemSpec&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                           const Carryover&, const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                           int, const Eigen::MatrixXd&) const override;
    const UkfParams& params() const { return params_; }

private:
    UkfParams params_;
};

class CkfPropagator final : public MomentPropagator {
public:
    std::string id() const override { return "ckf"; }
    StateBelief predict(const SystemSpec&, const StateBelief&, const Eigen::VectorXd&, int) const override;
    MeasurementMoments measurement_moments(const SystemSpec&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                           int, const Eigen::MatrixXd&, Carryover*) const override;
    MeasurementMoments recalibrate_moments(const SystemSpec&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                           const Carryover&, const Eigen::MatrixXd&, const Eigen::VectorXd&,
                                           int, const Eigen::MatrixXd&) const override;
};

// Propagator lookup by id: ekf, ekf2, ukf, ckf.
std::unique_ptr<MomentPropagator> make_propagator(const std::string& id, UkfParams ukf_params = {});
const std::vector<std::string>& propagator_ids();

// Iterated-EKF measurement update (conventional framework only): iterates
// the linearization up to 1000 times, stopping on relative convergence
// below 0.001 or on the divergence guard, which withdraws the latest
// iterate. Covariance via the conventional update with the final gain.
StepRecord iekf_update(const SystemSpec& model, const StateBelief& belief_pred,
                       const Eigen::VectorXd& z, int k, const Eigen::MatrixXd& R);

}  // namespace nlkf
