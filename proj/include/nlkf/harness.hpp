#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nlkf/propagators.hpp"
#include "nlkf/systems.hpp"
#include "nlkf/types.hpp"

namespace nlkf {

// Pregenerated per-run noise realizations, regenerable bit-identically
// from (master_seed, system id, run_index) and shared by every filter so
// comparisons differ only in the algorithm. Measurement noise is stored
// unit-variance and scaled by sigma at use, so one bank serves every
// sweep point.
struct NoiseBank {
    Eigen::VectorXd initial_state_draw;         // the initial estimate itself
    Eigen::MatrixXd process_noise;              // steps x n_x, scaled by sqrt(diag Q)
    Eigen::MatrixXd measurement_noise_unit;     // steps x n_m
    Eigen::VectorXd input_noise;                // steps+1 (input-noise systems), else empty
};

struct FilterConfig {
    std::string propagator;  // ekf, ekf2, ukf, ckf, or iekf
    FrameworkMode mode = FrameworkMode::Conventional;

    bool is_iekf() const { return propagator == "iekf"; }
    std::string label() const {
        return is_iekf() ? propagator
                         : propagator + (mode == FrameworkMode::Recalibrated ? "/new" : "/old");
    }
};

struct ExperimentSpec {
    std::string system_id;
    std::vector<FilterConfig> filters;
    std::vector<double> sigmas;
    int runs = 500;
    std::uint64_t master_seed = 0;
    int parallel_workers = 1;
    UkfParams ukf_params;
};

// One filter pass over one noise bank.
struct RunRecord {
    Eigen::VectorXd final_error;            // estimate - truth at the last step
    Eigen::VectorXd posterior_cov_diag;
    Eigen::MatrixXd abs_error_by_iteration; // steps x n_x
    int backouts = 0;
    bool diverged = false;
    double filter_seconds = 0.0;
};

// Aggregated statistics for one (filter, sigma) cell.
struct SweepCell {
    FilterConfig filter;
    double sigma = 0.0;
    Eigen::VectorXd rmse_final;       // per state, non-diverged runs
    Eigen::VectorXd estimated_rmse;   // sqrt(mean posterior variance) per state
    Eigen::MatrixXd rmse_by_iteration;
    double mean_step_time = 0.0;      // seconds
    double backout_rate = 0.0;        // backouts per step per run
    int divergence_count = 0;
    int runs = 0;
};

struct SweepResult {
    std::string system_id;
    std::uint64_t master_seed = 0;
    std::vector<SweepCell> cells;

    const SweepCell& cell(const std::string& label, double sigma) const;
};

NoiseBank make_noise_bank(const ExperimentSpec& spec, const SystemSpec& system, int run_index);

RunRecord run_filter_once(const SystemSpec& system, const FilterConfig& filter,
                          const NoiseBank& bank, double sigma, const UkfParams& ukf_params = {});

// Evaluates every (filter, sigma, run) cell against the shared banks.
// Aggregation order is fixed by run index, so the result is independent
// of parallel_workers.
SweepResult run_sweep(const ExperimentSpec& spec);

// estimated_rmse / rmse_final per state for one cell. Throws
// InsufficientSamples below 30 non-diverged runs.
Eigen::VectorXd consistency_stats(const SweepCell& cell);

// Mean step times normalized by the conventional-EKF cell at the same
// sigma. Keys are filter labels.
std::map<std::string, double> timing_profile(const SweepResult& result, double sigma);

// CSV schema: header
// system,filter,framework,sigma,state_index,rmse_actual,rmse_estimated,
// mean_step_time_ns,backout_rate,divergence_count,runs,seed
void write_sweep_csv(std::ostream& os, const SweepResult& result);

// ----------------------------------------------------------- theorems --

struct Theorem1Result {
    Eigen::MatrixXd mean_gap;  // E[P_ac - P_est]
    double min_eig = 0.0;
    double stderr_min_eig = 0.0;
};

// Monte Carlo check of the covariance-gap positive-semidefiniteness
// claim: samples S~ from a Wishart with E[S~] = S (Bartlett
// construction) and P_xy~ = P_xy + noise_scale * G, G iid standard
// normal, and accumulates P_ac - P_est. The min-eigenvalue standard
// error is a leave-one-out jackknife.
Theorem1Result theorem1_check(const Eigen::MatrixXd& P_xy, const Eigen::MatrixXd& S,
                              double noise_scale, int dof, int samples, std::uint64_t seed);

struct Theorem2Result {
    Eigen::MatrixXd mean_bias;  // E[P_new - P_ac]
    double norm = 0.0;          // spectral norm of the mean bias
    double stderr_norm = 0.0;
};

// Monte Carlo check of the recalibrated update's unbiasedness. With
// correlated = true the recalibration-point draw reuses the update-point
// draw, reproducing the iterated-filter failure mode.
Theorem2Result theorem2_check(const Eigen::MatrixXd& P_xy, const Eigen::MatrixXd& S,
                              double noise_scale, int dof, int samples, std::uint64_t seed,
                              bool correlated = false);

}  // namespace nlkf
