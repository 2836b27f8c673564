#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace nlkf {

// How the truth simulator perturbs the system.
enum class NoiseChannels {
    AdditiveProcess,  // x_k = f(...) + w_{k-1},  z_k = h(...) + sigma v_k
    InputCurrent,     // noise enters only through the input (battery)
};

enum class InitialEstimatePolicy { SampledFromP0, Fixed };

// A benchmark system: dynamics, measurement map, noise model, truth
// initial state, input profile and step count. Derivative suppliers are
// optional; central finite differences are used when absent.
//
// Conventions: f maps the state at step k-1 (with input u_{k-1}) to the
// state at step k; h evaluates the measurement at step k. Both take the
// step index k of the step being produced.
struct SystemSpec {
    std::string id;
    int n_x = 0;
    int n_m = 0;
    int n_u = 0;
    int steps = 0;

    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&, int)> f;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&, int)> h;

    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&, int)> jac_f;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&, int)> jac_h;
    std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&, const Eigen::VectorXd&, int)> hess_f;
    std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&, const Eigen::VectorXd&, int)> hess_h;

    Eigen::MatrixXd Q;
    Eigen::MatrixXd P0;
    std::function<Eigen::MatrixXd(double)> R_of_sigma;

    // Internal measurement units per unit of sweep sigma. Sweep grids are
    // quoted in each system's conventional measurement unit, which may
    // differ from the unit the model equations use internally (terrain
    // elevation: sigma in meters, geometry in kilometers).
    double sigma_unit = 1.0;

    Eigen::VectorXd x0_true;
    InitialEstimatePolicy x0_estimate_policy = InitialEstimatePolicy::SampledFromP0;
    Eigen::VectorXd x0_fixed;

    std::function<Eigen::VectorXd(int)> input;  // u_k

    // The generator drive ramp indexes by the step being predicted into;
    // every other system follows the plain u_{k-1} convention.
    bool transition_uses_current_index = false;
    Eigen::VectorXd u_for_transition(int k) const {
        return input(transition_uses_current_index ? k : k - 1);
    }

    NoiseChannels noise_channels = NoiseChannels::AdditiveProcess;
    double input_noise_sigma = 0.0;  // battery current noise, amperes

    // Filter-facing wrappers binding the nominal input profile.
    Eigen::VectorXd eval_h(const Eigen::VectorXd& x, int k) const { return h(x, input(k), k); }
    Eigen::MatrixXd eval_jac_h(const Eigen::VectorXd& x, int k) const;
    std::vector<Eigen::MatrixXd> eval_hess_h(const Eigen::VectorXd& x, int k) const;
    Eigen::MatrixXd eval_jac_f(const Eigen::VectorXd& x, const Eigen::VectorXd& u, int k) const;
    std::vector<Eigen::MatrixXd> eval_hess_f(const Eigen::VectorXd& x, const Eigen::VectorXd& u, int k) const;
};

// Central finite differences with per-coordinate step max(1e-6, 1e-6 |x_j|).
Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                            const Eigen::VectorXd& x, int n_out);
std::vector<Eigen::MatrixXd> fd_hessians(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn,
                                         const Eigen::VectorXd& x, int n_out);

// The five Appendix-style benchmark builders, addressable by id.
SystemSpec build_tracking3d();
SystemSpec build_terrain();
SystemSpec build_generator();
SystemSpec build_pendulum();
SystemSpec build_battery();

// Lookup by stable string id: tracking3d, terrain, generator, pendulum,
// battery. Throws std::invalid_argument on unknown ids.
SystemSpec build_system(const std::string& id);
const std::vector<std::string>& system_ids();

// Open-circuit voltage of the battery cell, blending the fresh-cell and
// aged-cell coefficient sets by the state of health. Outside [0.8, 1.0]
// the blend extrapolates; *extrapolated is set when provided.
double ocv(double soc, double soh, bool* extrapolated = nullptr);

struct TruthTrajectory {
    std::vector<Eigen::VectorXd> states;        // x_1..x_steps
    std::vector<Eigen::VectorXd> measurements;  // z_1..z_steps
    std::vector<Eigen::VectorXd> inputs;        // u_0..u_{steps-1}
};

struct NoiseBank;  // harness.hpp

// Iterates the dynamics with the bank's process noise and records the
// measurements with the bank's measurement noise scaled by sigma. For the
// battery the noisy current is injected into both f and h.
TruthTrajectory simulate_truth(const SystemSpec& spec, const NoiseBank& bank, double sigma);

}  // namespace nlkf
