#include "nlkf/systems.hpp"

#include <cmath>

#include "nlkf/errors.hpp"
#include "nlkf/harness.hpp"

namespace nlkf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// --------------------------------------------------- finite differences --

namespace {

double fd_step(double xj, double scale) { return std::max(scale, scale * std::abs(xj)); }

}  // namespace

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& fn, const VectorXd& x,
                     int n_out) {
    const Eigen::Index n = x.size();
    MatrixXd J(n_out, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = fd_step(x[j], 1e-6);
        VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return J;
}

std::vector<MatrixXd> fd_hessians(const std::function<VectorXd(const VectorXd&)>& fn,
                                  const VectorXd& x, int n_out) {
    // Wider step than the Jacobian: second differences lose half the
    // mantissa otherwise.
    const Eigen::Index n = x.size();
    const VectorXd f0 = fn(x);
    std::vector<MatrixXd> hs(static_cast<size_t>(n_out), MatrixXd::Zero(n, n));
    for (Eigen::Index a = 0; a < n; ++a) {
        const double ha = fd_step(x[a], 1e-4);
        VectorXd xp = x, xm = x;
        xp[a] += ha;
        xm[a] -= ha;
        const VectorXd dd = (fn(xp) - 2.0 * f0 + fn(xm)) / (ha * ha);
        for (int i = 0; i < n_out; ++i) hs[static_cast<size_t>(i)](a, a) = dd[i];
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const double hb = fd_step(x[b], 1e-4);
            VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[a] += ha; xpp[b] += hb;
            xpm[a] += ha; xpm[b] -= hb;
            xmp[a] -= ha; xmp[b] += hb;
            xmm[a] -= ha; xmm[b] -= hb;
            const VectorXd cross = (fn(xpp) - fn(xpm) - fn(xmp) + fn(xmm)) / (4.0 * ha * hb);
            for (int i = 0; i < n_out; ++i) {
                hs[static_cast<size_t>(i)](a, b) = cross[i];
                hs[static_cast<size_t>(i)](b, a) = cross[i];
            }
        }
    }
    return hs;
}

MatrixXd SystemSpec::eval_jac_h(const VectorXd& x, int k) const {
    if (jac_h) return jac_h(x, input(k), k);
    if (!h) throw JacobianUnavailable("no measurement map");
    const VectorXd u = input(k);
    return fd_jacobian([&](const VectorXd& xx) { return h(xx, u, k); }, x, n_m);
}

std::vector<MatrixXd> SystemSpec::eval_hess_h(const VectorXd& x, int k) const {
    if (hess_h) return hess_h(x, input(k), k);
    if (!h) throw HessianUnavailable("no measurement map");
    const VectorXd u = input(k);
    return fd_hessians([&](const VectorXd& xx) { return h(xx, u, k); }, x, n_m);
}

MatrixXd SystemSpec::eval_jac_f(const VectorXd& x, const VectorXd& u, int k) const {
    if (jac_f) return jac_f(x, u, k);
    if (!f) throw JacobianUnavailable("no state map");
    return fd_jacobian([&](const VectorXd& xx) { return f(xx, u, k); }, x, n_x);
}

std::vector<MatrixXd> SystemSpec::eval_hess_f(const VectorXd& x, const VectorXd& u, int k) const {
    if (hess_f) return hess_f(x, u, k);
    if (!f) throw HessianUnavailable("no state map");
    return fd_hessians([&](const VectorXd& xx) { return f(xx, u, k); }, x, n_x);
}

// ------------------------------------------------------- 3D tracking --

namespace {

Eigen::Vector3d tracking_sensor(int k) {
    const double phase = (k - 1) * M_PI / 15.0;
    return {20.0 + 20.0 * std::cos(phase), 20.0 + 20.0 * std::sin(phase), 0.0};
}

// Hessian of the range ||p - c|| over the position block: (I - uu^T)/r.
Eigen::Matrix3d range_hessian(const Eigen::Vector3d& d) {
    const double r = d.norm();
    const Eigen::Vector3d u = d / r;
    return (Eigen::Matrix3d::Identity() - u * u.transpose()) / r;
}

}  // namespace

SystemSpec build_tracking3d() {
    SystemSpec s;
    s.id = "tracking3d";
    s.n_x = 6;
    s.n_m = 2;
    s.n_u = 3;
    s.steps = 30;

    MatrixXd F = MatrixXd::Identity(6, 6);
    F.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity();  // dt = 1

    s.f = [F](const VectorXd& x, const VectorXd&, int) -> VectorXd { return F * x; };
    s.jac_f = [F](const VectorXd&, const VectorXd&, int) { return F; };
    s.hess_f = [](const VectorXd&, const VectorXd&, int) {
        return std::vector<MatrixXd>(6, MatrixXd::Zero(6, 6));
    };

    s.h = [](const VectorXd& x, const VectorXd&, int k) -> VectorXd {
        const Eigen::Vector3d p = x.head<3>();
        VectorXd y(2);
        y[0] = p.norm();
        y[1] = (p - tracking_sensor(k)).norm();
        return y;
    };
    s.jac_h = [](const VectorXd& x, const VectorXd&, int k) {
        const Eigen::Vector3d p = x.head<3>();
        const Eigen::Vector3d d = p - tracking_sensor(k);
        MatrixXd H = MatrixXd::Zero(2, 6);
        H.block<1, 3>(0, 0) = p.transpose() / p.norm();
        H.block<1, 3>(1, 0) = d.transpose() / d.norm();
        return H;
    };
    s.hess_h = [](const VectorXd& x, const VectorXd&, int k) {
        const Eigen::Vector3d p = x.head<3>();
        std::vector<MatrixXd> hs(2, MatrixXd::Zero(6, 6));
        hs[0].block<3, 3>(0, 0) = range_hessian(p);
        hs[1].block<3, 3>(0, 0) = range_hessian(p - tracking_sensor(k));
        return hs;
    };

    VectorXd qd(6), pd(6);
    qd << 0, 0, 0, 1e-6, 1e-6, 1e-6;
    pd << 100, 100, 100, 0.01, 0.01, 0.01;
    s.Q = qd.asDiagonal();
    s.P0 = pd.asDiagonal();
    s.R_of_sigma = [](double sigma) { return MatrixXd(sigma * sigma * MatrixXd::Identity(2, 2)); };

    s.x0_true = (VectorXd(6) << 10, -10, 50, 1, 2, 0).finished();
    s.input = [](int) { return VectorXd(VectorXd::Zero(3)); };
    return s;
}

// ----------------------------------------------------------- terrain --

SystemSpec build_terrain() {
    SystemSpec s;
    s.id = "terrain";
    s.n_x = 2;
    s.n_m = 1;
    s.n_u = 2;
    s.steps = 100;

    s.f = [](const VectorXd& x, const VectorXd& u, int) -> VectorXd { return x + u; };
    s.jac_f = [](const VectorXd&, const VectorXd&, int) { return MatrixXd(MatrixXd::Identity(2, 2)); };
    s.hess_f = [](const VectorXd&, const VectorXd&, int) {
        return std::vector<MatrixXd>(2, MatrixXd::Zero(2, 2));
    };

    // Elevation sin(||x|| / 40), positions in kilometers.
    s.h = [](const VectorXd& x, const VectorXd&, int) -> VectorXd {
        return VectorXd::Constant(1, std::sin(x.norm() / 40.0));
    };
    s.jac_h = [](const VectorXd& x, const VectorXd&, int) -> MatrixXd {
        const double g = x.norm();
        if (g == 0.0) return MatrixXd::Zero(1, 2);
        return std::cos(g / 40.0) / (40.0 * g) * x.transpose();
    };
    s.hess_h = [](const VectorXd& x, const VectorXd&, int) {
        const double g = x.norm();
        const double r = g / 40.0;
        const MatrixXd outer = x * x.transpose();
        MatrixXd H = -std::sin(r) / 1600.0 * outer / (g * g) +
                     std::cos(r) / 40.0 * (MatrixXd::Identity(2, 2) / g - outer / (g * g * g));
        return std::vector<MatrixXd>{H};
    };

    s.Q = 2.5e-7 * MatrixXd::Identity(2, 2);  // 0.25 m^2 in km^2
    s.P0 = MatrixXd::Identity(2, 2);
    s.R_of_sigma = [](double sigma) { return MatrixXd(VectorXd::Constant(1, sigma * sigma).asDiagonal()); };
    s.sigma_unit = 1e-3;  // elevation sigmas are quoted in meters, the map is in km
    s.x0_true = (VectorXd(2) << 10, 10).finished();
    s.input = [](int) { return (VectorXd(2) << 0.5, 0.0).finished(); };
    return s;
}

// --------------------------------------------------------- generator --

namespace {

constexpr double kGenDt = 1e-4;

}  // namespace

SystemSpec build_generator() {
    SystemSpec s;
    s.id = "generator";
    s.n_x = 4;
    s.n_m = 1;
    s.n_u = 3;
    s.steps = 100;
    s.transition_uses_current_index = true;

    s.f = [](const VectorXd& x, const VectorXd& u, int) -> VectorXd {
        const double dt = kGenDt;
        VectorXd out(4);
        out[0] = x[0] + 377.0 * x[1] * dt;
        out[1] = x[1] + dt / 13.0 *
                            (u[0] - u[2] * x[2] * std::sin(x[0]) / 0.375 +
                             0.9215 * u[2] * u[2] * std::sin(2.0 * x[0]) - 0.05 * x[1]);
        out[2] = x[2] + dt / 0.131 * (u[1] - x[2]) -
                 4.4933 * dt / 0.131 * (x[2] - u[2] * std::cos(x[0]));
        out[3] = x[3] - x[3] * dt / 0.0131 + 0.6911 * u[2] * std::sin(x[0]) * dt / 0.0131;
        return out;
    };
    s.jac_f = [](const VectorXd& x, const VectorXd& u, int) {
        const double dt = kGenDt;
        MatrixXd F = MatrixXd::Identity(4, 4);
        F(0, 1) = 377.0 * dt;
        F(1, 0) = dt / 13.0 *
                  (-u[2] * x[2] * std::cos(x[0]) / 0.375 + 1.843 * u[2] * u[2] * std::cos(2.0 * x[0]));
        F(1, 1) = 1.0 - 0.05 * dt / 13.0;
        F(1, 2) = -dt / 13.0 * u[2] * std::sin(x[0]) / 0.375;
        F(2, 0) = -4.4933 * dt / 0.131 * u[2] * std::sin(x[0]);
        F(2, 2) = 1.0 - dt / 0.131 - 4.4933 * dt / 0.131;
        F(3, 0) = 0.6911 * u[2] * std::cos(x[0]) * dt / 0.0131;
        F(3, 3) = 1.0 - dt / 0.0131;
        return F;
    };
    s.hess_f = [](const VectorXd& x, const VectorXd& u, int) {
        const double dt = kGenDt;
        std::vector<MatrixXd> hs(4, MatrixXd::Zero(4, 4));
        hs[1](0, 0) = dt / 13.0 *
                      (u[2] * x[2] * std::sin(x[0]) / 0.375 - 3.686 * u[2] * u[2] * std::sin(2.0 * x[0]));
        hs[1](0, 2) = hs[1](2, 0) = -dt / 13.0 * u[2] * std::cos(x[0]) / 0.375;
        hs[2](0, 0) = -4.4933 * dt / 0.131 * u[2] * std::cos(x[0]);
        hs[3](0, 0) = -0.6911 * u[2] * std::sin(x[0]) * dt / 0.0131;
        return hs;
    };

    // Electrical output power.
    s.h = [](const VectorXd& x, const VectorXd& u, int) -> VectorXd {
        return VectorXd::Constant(1, u[2] * x[2] * std::sin(x[0]) / 0.375 +
                                         0.9215 * u[2] * u[2] * std::sin(2.0 * x[0]));
    };
    s.jac_h = [](const VectorXd& x, const VectorXd& u, int) {
        MatrixXd H = MatrixXd::Zero(1, 4);
        H(0, 0) = u[2] * x[2] * std::cos(x[0]) / 0.375 + 1.843 * u[2] * u[2] * std::cos(2.0 * x[0]);
        H(0, 2) = u[2] * std::sin(x[0]) / 0.375;
        return H;
    };
    s.hess_h = [](const VectorXd& x, const VectorXd& u, int) {
        MatrixXd H = MatrixXd::Zero(4, 4);
        H(0, 0) = -u[2] * x[2] * std::sin(x[0]) / 0.375 - 3.686 * u[2] * u[2] * std::sin(2.0 * x[0]);
        H(0, 2) = H(2, 0) = u[2] * std::cos(x[0]) / 0.375;
        return std::vector<MatrixXd>{H};
    };

    VectorXd qd(4), pd(4);
    qd << 1e-10, 1e-16, 1e-10, 1e-10;
    pd << 1e-4, 1e-10, 1e-4, 1e-4;
    s.Q = qd.asDiagonal();
    s.P0 = pd.asDiagonal();
    s.R_of_sigma = [](double sigma) { return MatrixXd(VectorXd::Constant(1, sigma * sigma).asDiagonal()); };
    s.x0_true = (VectorXd(4) << 0.4, 0, 0, 0).finished();
    s.input = [](int k) { return (VectorXd(3) << 0.8, 2.11 + 0.0002 * k, 1.002).finished(); };
    return s;
}

// ---------------------------------------------------------- pendulum --

SystemSpec build_pendulum() {
    SystemSpec s;
    s.id = "pendulum";
    s.n_x = 2;  // (omega, theta)
    s.n_m = 1;
    s.n_u = 1;
    s.steps = 100;

    constexpr double dt = 0.01, m = 1.0, l = 1.0, g = 9.8;

    s.f = [=](const VectorXd& x, const VectorXd&, int) -> VectorXd {
        return (VectorXd(2) << x[0] - g / l * std::sin(x[1]) * dt, x[1] + x[0] * dt).finished();
    };
    s.jac_f = [=](const VectorXd& x, const VectorXd&, int) {
        MatrixXd F(2, 2);
        F << 1.0, -g / l * std::cos(x[1]) * dt, dt, 1.0;
        return F;
    };
    s.hess_f = [=](const VectorXd& x, const VectorXd&, int) {
        std::vector<MatrixXd> hs(2, MatrixXd::Zero(2, 2));
        hs[0](1, 1) = g / l * std::sin(x[1]) * dt;
        return hs;
    };

    // Horizontal rope-tension component.
    s.h = [=](const VectorXd& x, const VectorXd&, int) -> VectorXd {
        const double w = x[0], th = x[1];
        return VectorXd::Constant(1, m * g * std::cos(th) * std::sin(th) +
                                         m * l * w * w * std::sin(th));
    };
    s.jac_h = [=](const VectorXd& x, const VectorXd&, int) {
        const double w = x[0], th = x[1];
        MatrixXd H(1, 2);
        H << 2.0 * m * l * w * std::sin(th),
            m * g * std::cos(2.0 * th) + m * l * w * w * std::cos(th);
        return H;
    };
    s.hess_h = [=](const VectorXd& x, const VectorXd&, int) {
        const double w = x[0], th = x[1];
        MatrixXd H(2, 2);
        H << 2.0 * m * l * std::sin(th), 2.0 * m * l * w * std::cos(th),
            2.0 * m * l * w * std::cos(th),
            -2.0 * m * g * std::sin(2.0 * th) - m * l * w * w * std::sin(th);
        return std::vector<MatrixXd>{H};
    };

    VectorXd qd(2), pd(2);
    qd << 1e-10, 0.0;
    const double p0 = (M_PI / 18.0) * (M_PI / 18.0);
    pd << p0, p0;
    s.Q = qd.asDiagonal();
    s.P0 = pd.asDiagonal();
    s.R_of_sigma = [](double sigma) { return MatrixXd(VectorXd::Constant(1, sigma * sigma).asDiagonal()); };
    s.x0_true = (VectorXd(2) << 0.0, M_PI / 4.0).finished();
    s.input = [](int) { return VectorXd(VectorXd::Zero(1)); };
    return s;
}

// ----------------------------------------------------------- battery --

namespace {

constexpr double kBatR1 = 0.01;
constexpr double kBatR2 = 0.05;
constexpr double kBatRC = 0.008;  // 1/(R2 C1)
constexpr double kBatQ0 = 1.0;    // Ah
constexpr double kBatDt = 1.0;
constexpr double kBatCurrentSigma = 1e-3;  // amperes

constexpr double kA100[10] = {1390.38, -6961.31, 14760.31, -17230.92, 12055.71,
                              -5162.75, 1330.60, -196.37, 15.60, 2.96};
constexpr double kA80[10] = {813.94, -4229.96, 9345.49, -11415.38, 8396.15,
                             -3801.07, 1043.09, -165.29, 14.28, 2.96};

// Degree-9 polynomial with a[0] as the SOC^9 coefficient, plus its
// first two derivatives (Horner).
void poly_eval(const double (&a)[10], double s, double& p, double& dp, double& ddp) {
    p = dp = ddp = 0.0;
    for (double c : a) {
        ddp = ddp * s + 2.0 * dp;
        dp = dp * s + p;
        p = p * s + c;
    }
}

void ocv_derivs(double soc, double soh, double& val, double& d_soc, double& dd_soc,
                double& d_soh, double& dd_soc_soh) {
    const double w100 = (soh - 0.8) / 0.2;
    const double w80 = (1.0 - soh) / 0.2;
    double p100, dp100, ddp100, p80, dp80, ddp80;
    poly_eval(kA100, soc, p100, dp100, ddp100);
    poly_eval(kA80, soc, p80, dp80, ddp80);
    val = w100 * p100 + w80 * p80;
    d_soc = w100 * dp100 + w80 * dp80;
    dd_soc = w100 * ddp100 + w80 * ddp80;
    d_soh = (p100 - p80) / 0.2;
    dd_soc_soh = (dp100 - dp80) / 0.2;
}

double battery_current(int k) {
    if (k > 15 && k <= 75) return -2.0;
    if (k > 105 && k <= 165) return 2.0;
    return 0.0;
}

}  // namespace

double ocv(double soc, double soh, bool* extrapolated) {
    if (extrapolated) *extrapolated = soh < 0.8 || soh > 1.0;
    double val, a, b, c, d;
    ocv_derivs(soc, soh, val, a, b, c, d);
    return val;
}

SystemSpec build_battery() {
    SystemSpec s;
    s.id = "battery";
    s.n_x = 3;  // (SOC, U_c, SOH)
    s.n_m = 1;
    s.n_u = 1;
    s.steps = 180;

    const double decay = std::exp(-kBatDt * kBatRC);
    const double charge_gain = (1.0 - decay) * kBatR2;

    // Coulomb-counting SOC, first-order RC voltage, static SOH.
    s.f = [=](const VectorXd& x, const VectorXd& u, int) -> VectorXd {
        VectorXd out(3);
        out[0] = x[0] + kBatDt * u[0] / (3600.0 * kBatQ0 * x[2]);
        out[1] = x[1] * decay + charge_gain * u[0];
        out[2] = x[2];
        return out;
    };
    s.jac_f = [=](const VectorXd& x, const VectorXd& u, int) {
        MatrixXd F = MatrixXd::Identity(3, 3);
        F(0, 2) = -kBatDt * u[0] / (3600.0 * kBatQ0 * x[2] * x[2]);
        F(1, 1) = decay;
        return F;
    };
    s.hess_f = [=](const VectorXd& x, const VectorXd& u, int) {
        std::vector<MatrixXd> hs(3, MatrixXd::Zero(3, 3));
        hs[0](2, 2) = 2.0 * kBatDt * u[0] / (3600.0 * kBatQ0 * x[2] * x[2] * x[2]);
        return hs;
    };

    s.h = [](const VectorXd& x, const VectorXd& u, int) -> VectorXd {
        return VectorXd::Constant(1, ocv(x[0], x[2]) + x[1] + kBatR1 * u[0]);
    };
    s.jac_h = [](const VectorXd& x, const VectorXd&, int) {
        double val, d_soc, dd_soc, d_soh, dd_mix;
        ocv_derivs(x[0], x[2], val, d_soc, dd_soc, d_soh, dd_mix);
        MatrixXd H(1, 3);
        H << d_soc, 1.0, d_soh;
        return H;
    };
    s.hess_h = [](const VectorXd& x, const VectorXd&, int) {
        double val, d_soc, dd_soc, d_soh, dd_mix;
        ocv_derivs(x[0], x[2], val, d_soc, dd_soc, d_soh, dd_mix);
        MatrixXd H = MatrixXd::Zero(3, 3);
        H(0, 0) = dd_soc;
        H(0, 2) = H(2, 0) = dd_mix;
        return std::vector<MatrixXd>{H};
    };

    // Process noise from the current sensor only: Q = G sigma_I^2 G^T
    // with G = df/dI at nominal (fresh-cell) state of health.
    VectorXd G(3);
    G << kBatDt / (3600.0 * kBatQ0), charge_gain, 0.0;
    s.Q = kBatCurrentSigma * kBatCurrentSigma * G * G.transpose();
    VectorXd pd(3);
    pd << 0.04, 1e-10, 0.01;
    s.P0 = pd.asDiagonal();
    // The R1 I term inherits the current noise on top of the voltmeter.
    s.R_of_sigma = [](double sigma) {
        const double extra = kBatR1 * kBatCurrentSigma;
        return MatrixXd(VectorXd::Constant(1, sigma * sigma + extra * extra).asDiagonal());
    };

    s.x0_true = (VectorXd(3) << 0.60, 0.0, 0.90).finished();
    s.x0_estimate_policy = InitialEstimatePolicy::Fixed;
    s.x0_fixed = (VectorXd(3) << 0.80, 0.0, 1.00).finished();
    s.input = [](int k) { return VectorXd::Constant(1, battery_current(k)); };
    s.noise_channels = NoiseChannels::InputCurrent;
    s.input_noise_sigma = kBatCurrentSigma;
    return s;
}

// ------------------------------------------------------------ lookup --

SystemSpec build_system(const std::string& id) {
    if (id == "tracking3d") return build_tracking3d();
    if (id == "terrain") return build_terrain();
    if (id == "generator") return build_generator();
    if (id == "pendulum") return build_pendulum();
    if (id == "battery") return build_battery();
    throw std::invalid_argument("unknown system id: " + id);
}

const std::vector<std::string>& system_ids() {
    static const std::vector<std::string> ids = {"tracking3d", "terrain", "generator", "pendulum",
                                                 "battery"};
    return ids;
}

// ------------------------------------------------------------- truth --

TruthTrajectory simulate_truth(const SystemSpec& spec, const NoiseBank& bank, double sigma) {
    TruthTrajectory traj;
    traj.states.reserve(static_cast<size_t>(spec.steps));
    traj.measurements.reserve(static_cast<size_t>(spec.steps));
    traj.inputs.reserve(static_cast<size_t>(spec.steps));

    VectorXd x = spec.x0_true;
    for (int k = 1; k <= spec.steps; ++k) {
        VectorXd u = spec.u_for_transition(k);
        VectorXd u_meas = spec.input(k);
        if (spec.noise_channels == NoiseChannels::InputCurrent) {
            u.array() += bank.input_noise[k - 1];
            u_meas.array() += bank.input_noise[k];
            x = spec.f(x, u, k);
        } else {
            x = spec.f(x, u, k) + bank.process_noise.row(k - 1).transpose();
        }
        if (!x.allFinite()) throw NonFiniteState("truth trajectory left finite range at step " +
                                                 std::to_string(k));
        VectorXd z = spec.h(x, u_meas, k) +
                     spec.sigma_unit * sigma * bank.measurement_noise_unit.row(k - 1).transpose();
        traj.states.push_back(x);
        traj.measurements.push_back(std::move(z));
        traj.inputs.push_back(std::move(u));
    }
    return traj;
}

}  // namespace nlkf
