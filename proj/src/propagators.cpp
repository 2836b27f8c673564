#include "nlkf/propagators.hpp"

#include <cmath>

#include "nlkf/errors.hpp"
#include "nlkf/filter_core.hpp"
#include "nlkf/linalg.hpp"

namespace nlkf {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Weighted sigma-set moments. Means are accumulated as an anchored sum
// anchor + sum_i w_i (v_i - anchor), which is exact since the weights sum
// to one and avoids cancellation at the near-singular UKF center weight.
VectorXd weighted_mean(const std::vector<VectorXd>& vs, const VectorXd& w) {
    VectorXd acc = VectorXd::Zero(vs[0].size());
    // Symmetric sets (center, +1..+n, -1..-n) with equal pair weights let the
    // leading-order terms of each +/- pair cancel before the weight is applied,
    // which matters when the weights are large (near-singular UKF scaling).
    const size_t n = (vs.size() - 1) / 2;
    const bool paired = vs.size() == 2 * n + 1 && n > 0 &&
        [&] {
            for (size_t i = 1; i <= n; ++i)
                if (w[static_cast<Eigen::Index>(i)] != w[static_cast<Eigen::Index>(i + n)]) return false;
            return true;
        }();
    if (paired) {
        for (size_t i = 1; i <= n; ++i)
            acc += w[static_cast<Eigen::Index>(i)] * ((vs[i] - vs[0]) + (vs[i + n] - vs[0]));
    } else {
        for (size_t i = 1; i < vs.size(); ++i) acc += w[static_cast<Eigen::Index>(i)] * (vs[i] - vs[0]);
    }
    return vs[0] + acc;
}

MatrixXd weighted_outer(const std::vector<VectorXd>& a, const VectorXd& a_center,
                        const std::vector<VectorXd>& b, const VectorXd& b_center,
                        const VectorXd& w) {
    MatrixXd acc = MatrixXd::Zero(a_center.size(), b_center.size());
    for (size_t i = 0; i < a.size(); ++i)
        acc += w[static_cast<Eigen::Index>(i)] * (a[i] - a_center) * (b[i] - b_center).transpose();
    return acc;
}

MeasurementMoments sigma_measurement_moments(const std::vector<VectorXd>& points,
                                             const VectorXd& state_center,
                                             const std::vector<VectorXd>& ys,
                                             const VectorXd& w_mean, const VectorXd& w_cov,
                                             const MatrixXd& R) {
    MeasurementMoments mm;
    mm.y_hat = weighted_mean(ys, w_mean);
    mm.P_y = symmetrized(weighted_outer(ys, mm.y_hat, ys, mm.y_hat, w_cov));
    mm.P_xy = weighted_outer(points, state_center, ys, mm.y_hat, w_cov);
    mm.S = symmetrized(mm.P_y + R);
    return mm;
}

std::vector<VectorXd> scaled_sigma_points(const VectorXd& center, const MatrixXd& P, double spread) {
    const MatrixXd L = conditioned_cholesky(P);
    const Eigen::Index n = center.size();
    std::vector<VectorXd> pts;
    pts.reserve(static_cast<size_t>(2 * n + 1));
    pts.push_back(center);
    for (Eigen::Index i = 0; i < n; ++i) pts.push_back(center + spread * L.col(i));
    for (Eigen::Index i = 0; i < n; ++i) pts.push_back(center - spread * L.col(i));
    return pts;
}

// 2 n_x equally weighted cubature points center +- sqrt(n_x) L_i.
std::vector<VectorXd> cubature_points(const VectorXd& center, const MatrixXd& L) {
    const Eigen::Index n = center.size();
    const double s = std::sqrt(static_cast<double>(n));
    std::vector<VectorXd> pts;
    pts.reserve(static_cast<size_t>(2 * n));
    for (Eigen::Index i = 0; i < n; ++i) pts.push_back(center + s * L.col(i));
    for (Eigen::Index i = 0; i < n; ++i) pts.push_back(center - s * L.col(i));
    return pts;
}

MeasurementMoments ckf_moments_from_points(const SystemSpec& model, const std::vector<VectorXd>& pts,
                                           const VectorXd& state_center, int k, const MatrixXd& R) {
    const double w = 1.0 / static_cast<double>(pts.size());
    std::vector<VectorXd> ys;
    ys.reserve(pts.size());
    for (const auto& p : pts) ys.push_back(model.eval_h(p, k));
    const VectorXd wv = VectorXd::Constant(static_cast<Eigen::Index>(pts.size()), w);
    return sigma_measurement_moments(pts, state_center, ys, wv, wv, R);
}

// y_hat_i += 1/2 tr(H*_i P); P_y(i,j) += 1/2 tr(H*_i P H*_j P).
void add_second_order_terms(const std::vector<MatrixXd>& hessians, const MatrixXd& P,
                            VectorXd& mean, MatrixXd& cov) {
    const int n = static_cast<int>(hessians.size());
    std::vector<MatrixXd> HP(hessians.size());
    for (int i = 0; i < n; ++i) HP[static_cast<size_t>(i)] = hessians[static_cast<size_t>(i)] * P;
    for (int i = 0; i < n; ++i) {
        mean[i] += 0.5 * HP[static_cast<size_t>(i)].trace();
        for (int j = 0; j < n; ++j)
            cov(i, j) += 0.5 * (HP[static_cast<size_t>(i)] * HP[static_cast<size_t>(j)]).trace();
    }
}

}  // namespace

// ---------------------------------------------------------------- EKF --

StateBelief EkfPropagator::predict(const SystemSpec& model, const StateBelief& belief,
                                   const VectorXd& u, int k) const {
    const MatrixXd F = model.eval_jac_f(belief.mean, u, k);
    return {model.f(belief.mean, u, k), F * belief.cov * F.transpose() + model.Q};
}

MeasurementMoments EkfPropagator::measurement_moments(const SystemSpec& model, const VectorXd& point,
                                                      const MatrixXd& P_pred, int k, const MatrixXd& R,
                                                      Carryover*) const {
    const MatrixXd H = model.eval_jac_h(point, k);
    MeasurementMoments mm;
    mm.y_hat = model.eval_h(point, k);
    mm.P_xy = P_pred * H.transpose();
    mm.P_y = symmetrized(H * mm.P_xy);
    mm.S = symmetrized(mm.P_y + R);
    return mm;
}

MeasurementMoments EkfPropagator::recalibrate_moments(const SystemSpec& model, const VectorXd& x_upd,
                                                      const MatrixXd& P_pred, const Carryover&,
                                                      const MatrixXd&, const VectorXd&, int k,
                                                      const MatrixXd& R) const {
    return measurement_moments(model, x_upd, P_pred, k, R, nullptr);
}

// --------------------------------------------------------------- EKF2 --

StateBelief Ekf2Propagator::predict(const SystemSpec& model, const StateBelief& belief,
                                    const VectorXd& u, int k) const {
    const MatrixXd F = model.eval_jac_f(belief.mean, u, k);
    VectorXd mean = model.f(belief.mean, u, k);
    MatrixXd cov = F * belief.cov * F.transpose();
    add_second_order_terms(model.eval_hess_f(belief.mean, u, k), belief.cov, mean, cov);
    return {std::move(mean), cov + model.Q};
}

MeasurementMoments Ekf2Propagator::measurement_moments(const SystemSpec& model, const VectorXd& point,
                                                       const MatrixXd& P_pred, int k, const MatrixXd& R,
                                                       Carryover*) const {
    const MatrixXd H = model.eval_jac_h(point, k);
    MeasurementMoments mm;
    mm.y_hat = model.eval_h(point, k);
    mm.P_xy = P_pred * H.transpose();
    mm.P_y = H * mm.P_xy;
    add_second_order_terms(model.eval_hess_h(point, k), P_pred, mm.y_hat, mm.P_y);
    mm.P_y = symmetrized(mm.P_y);
    mm.S = symmetrized(mm.P_y + R);
    return mm;
}

MeasurementMoments Ekf2Propagator::recalibrate_moments(const SystemSpec& model, const VectorXd& x_upd,
                                                       const MatrixXd& P_pred, const Carryover&,
                                                       const MatrixXd&, const VectorXd&, int k,
                                                       const MatrixXd& R) const {
    return measurement_moments(model, x_upd, P_pred, k, R, nullptr);
}

// ---------------------------------------------------------------- UKF --

UkfWeights ukf_weights(int n_x, double alpha, double beta, double kappa) {
    if (n_x < 1) throw DimensionMismatch("ukf_weights: n_x must be >= 1");
    UkfWeights w;
    w.lambda = alpha * alpha * (n_x + kappa) - n_x;
    const double scale = n_x + w.lambda;
    if (scale <= 0.0) throw DegenerateScaling("ukf_weights: n_x + lambda <= 0");
    const Eigen::Index m = 2 * n_x + 1;
    w.w_mean = VectorXd::Constant(m, 1.0 / (2.0 * scale));
    w.w_cov = w.w_mean;
    w.w_mean[0] = w.lambda / scale;
    w.w_cov[0] = w.lambda / scale + 1.0 - alpha * alpha + beta;
    return w;
}

StateBelief UkfPropagator::predict(const SystemSpec& model, const StateBelief& belief,
                                   const VectorXd& u, int k) const {
    const UkfWeights w = ukf_weights(model.n_x, params_.alpha, params_.beta, params_.kappa);
    auto pts = scaled_sigma_points(belief.mean, belief.cov, std::sqrt(w.lambda + model.n_x));
    for (auto& p : pts) p = model.f(p, u, k);
    const VectorXd mean = weighted_mean(pts, w.w_mean);
    return {mean, weighted_outer(pts, mean, pts, mean, w.w_cov) + model.Q};
}

MeasurementMoments UkfPropagator::measurement_moments(const SystemSpec& model, const VectorXd& point,
                                                      const MatrixXd& P_pred, int k, const MatrixXd& R,
                                                      Carryover* carry) const {
    const UkfWeights w = ukf_weights(model.n_x, params_.alpha, params_.beta, params_.kappa);
    auto pts = scaled_sigma_points(point, P_pred, std::sqrt(w.lambda + model.n_x));
    std::vector<VectorXd> ys;
    ys.reserve(pts.size());
    for (const auto& p : pts) ys.push_back(model.eval_h(p, k));
    MeasurementMoments mm = sigma_measurement_moments(pts, point, ys, w.w_mean, w.w_cov, R);
    if (carry) {
        carry->sigma_points = std::move(pts);
        carry->y_hat = mm.y_hat;
    }
    return mm;
}

MeasurementMoments UkfPropagator::recalibrate_moments(const SystemSpec& model, const VectorXd& x_upd,
                                                      const MatrixXd&, const Carryover& carry,
                                                      const MatrixXd& K, const VectorXd& residual,
                                                      int k, const MatrixXd& R) const {
    const UkfWeights w = ukf_weights(model.n_x, params_.alpha, params_.beta, params_.kappa);
    const VectorXd shift = K * residual;
    std::vector<VectorXd> pts(carry.sigma_points.size());
    std::vector<VectorXd> ys(carry.sigma_points.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        pts[i] = carry.sigma_points[i] + shift;
        ys[i] = model.eval_h(pts[i], k);
    }
    return sigma_measurement_moments(pts, x_upd, ys, w.w_mean, w.w_cov, R);
}

// ---------------------------------------------------------------- CKF --

StateBelief CkfPropagator::predict(const SystemSpec& model, const StateBelief& belief,
                                   const VectorXd& u, int k) const {
    auto pts = cubature_points(belief.mean, conditioned_cholesky(belief.cov));
    for (auto& p : pts) p = model.f(p, u, k);
    const double wi = 1.0 / static_cast<double>(pts.size());
    const VectorXd wv = VectorXd::Constant(static_cast<Eigen::Index>(pts.size()), wi);
    const VectorXd mean = weighted_mean(pts, wv);
    return {mean, weighted_outer(pts, mean, pts, mean, wv) + model.Q};
}

MeasurementMoments CkfPropagator::measurement_moments(const SystemSpec& model, const VectorXd& point,
                                                      const MatrixXd& P_pred, int k, const MatrixXd& R,
                                                      Carryover* carry) const {
    const MatrixXd L = conditioned_cholesky(P_pred);
    auto pts = cubature_points(point, L);
    MeasurementMoments mm = ckf_moments_from_points(model, pts, point, k, R);
    if (carry) {
        carry->chol_factor = L;
        carry->y_hat = mm.y_hat;
    }
    return mm;
}

MeasurementMoments CkfPropagator::recalibrate_moments(const SystemSpec& model, const VectorXd& x_upd,
                                                      const MatrixXd&, const Carryover& carry,
                                                      const MatrixXd&, const VectorXd&, int k,
                                                      const MatrixXd& R) const {
    // Redraw about the updated mean, reusing L from the prediction.
    auto pts = cubature_points(x_upd, carry.chol_factor);
    return ckf_moments_from_points(model, pts, x_upd, k, R);
}

// --------------------------------------------------------------- IEKF --

StepRecord iekf_update(const SystemSpec& model, const StateBelief& belief_pred, const VectorXd& z,
                       int k, const MatrixXd& R) {
    constexpr int kMaxIterations = 1000;
    constexpr double kRelTol = 1e-3;
    // Below this magnitude the relative-change test switches to absolute
    // change (the printed test divides by the coordinate).
    constexpr double kRelFloor = 1e-12;

    StepRecord rec;
    rec.prior = belief_pred;

    const MatrixXd& P_pred = belief_pred.cov;
    VectorXd x_prev = belief_pred.mean;
    VectorXd x_prev2;
    MatrixXd K, S_i;
    MeasurementMoments mm;

    for (int i = 1; i <= kMaxIterations; ++i) {
        const MatrixXd H = model.eval_jac_h(x_prev, k);
        // Relinearized predicted measurement: h about the current iterate,
        // evaluated at the prior mean.
        mm.y_hat = model.eval_h(x_prev, k) + H * (belief_pred.mean - x_prev);
        mm.P_xy = P_pred * H.transpose();
        mm.P_y = symmetrized(H * mm.P_xy);
        mm.S = symmetrized(mm.P_y + R);
        MatrixXd K_i = kalman_gain(mm.P_xy, mm.S);
        VectorXd x_i = belief_pred.mean + K_i * (z - mm.y_hat);

        if (i > 1 && (x_i - x_prev).norm() > (x_prev - x_prev2).norm()) {
            // Divergence guard: withdraw the latest iterate and stop.
            break;
        }
        S_i = mm.S;
        K = K_i;

        double change = 0.0;
        for (Eigen::Index j = 0; j < x_i.size(); ++j) {
            const double c = std::abs(x_prev[j]) < kRelFloor
                                 ? std::abs(x_i[j] - x_prev[j])
                                 : std::abs(1.0 - x_i[j] / x_prev[j]);
            change = std::max(change, c);
        }
        x_prev2 = x_prev;
        x_prev = x_i;
        if (change < kRelTol) break;
    }

    rec.gain = K;
    rec.residual = z - mm.y_hat;
    rec.moments_pred = mm;
    rec.posterior.mean = x_prev;
    rec.posterior.set_cov(conventional_cov_update(P_pred, K, S_i));
    rec.backed_out = false;
    return rec;
}

// ------------------------------------------------------------- lookup --

std::unique_ptr<MomentPropagator> make_propagator(const std::string& id, UkfParams ukf_params) {
    if (id == "ekf") return std::make_unique<EkfPropagator>();
    if (id == "ekf2") return std::make_unique<Ekf2Propagator>();
    if (id == "ukf") return std::make_unique<UkfPropagator>(ukf_params);
    if (id == "ckf") return std::make_unique<CkfPropagator>();
    throw std::invalid_argument("unknown propagator id: " + id);
}

const std::vector<std::string>& propagator_ids() {
    static const std::vector<std::string> ids = {"ekf", "ekf2", "ukf", "ckf"};
    return ids;
}

}  // namespace nlkf
