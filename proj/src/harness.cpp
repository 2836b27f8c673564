#include "nlkf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ostream>
#include <thread>

#include "nlkf/errors.hpp"
#include "nlkf/filter_core.hpp"
#include "nlkf/linalg.hpp"
#include "nlkf/philox.hpp"

namespace nlkf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Stream tags within one (seed, system, run) bank.
enum StreamTag : std::uint32_t { kInitTag = 0, kProcessTag = 1, kMeasurementTag = 2, kInputTag = 3 };

MatrixXd normal_matrix(RandomStream& rs, int rows, int cols) {
    MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rs.next_normal();
    return m;
}

}  // namespace

NoiseBank make_noise_bank(const ExperimentSpec& spec, const SystemSpec& system, int run_index) {
    const std::uint32_t domain = fnv1a32(system.id);
    const auto run = static_cast<std::uint32_t>(run_index);
    NoiseBank bank;

    RandomStream init(spec.master_seed, domain, run, kInitTag);
    if (system.x0_estimate_policy == InitialEstimatePolicy::SampledFromP0) {
        const VectorXd draw = normal_matrix(init, system.n_x, 1);
        bank.initial_state_draw = system.x0_true + conditioned_cholesky(system.P0) * draw;
    } else {
        bank.initial_state_draw = system.x0_fixed;
    }

    if (system.noise_channels == NoiseChannels::InputCurrent) {
        bank.process_noise = MatrixXd::Zero(system.steps, system.n_x);
        RandomStream input(spec.master_seed, domain, run, kInputTag);
        bank.input_noise =
            system.input_noise_sigma * normal_matrix(input, system.steps + 1, 1).col(0);
    } else {
        RandomStream process(spec.master_seed, domain, run, kProcessTag);
        const VectorXd q_sd = system.Q.diagonal().cwiseSqrt();
        bank.process_noise = normal_matrix(process, system.steps, system.n_x) *
                             MatrixXd(q_sd.asDiagonal());
    }

    RandomStream meas(spec.master_seed, domain, run, kMeasurementTag);
    bank.measurement_noise_unit = normal_matrix(meas, system.steps, system.n_m);
    return bank;
}

RunRecord run_filter_once(const SystemSpec& system, const FilterConfig& filter,
                          const NoiseBank& bank, double sigma, const UkfParams& ukf_params) {
    const MatrixXd R = system.R_of_sigma(system.sigma_unit * sigma);
    const TruthTrajectory truth = simulate_truth(system, bank, sigma);

    RunRecord rec;
    rec.abs_error_by_iteration = MatrixXd::Zero(system.steps, system.n_x);

    std::unique_ptr<MomentPropagator> prop =
        filter.is_iekf() ? make_propagator("ekf") : make_propagator(filter.propagator, ukf_params);

    StateBelief belief(bank.initial_state_draw, system.P0);
    const auto t0 = std::chrono::steady_clock::now();
    int last_step = 0;
    try {
        for (int k = 1; k <= system.steps; ++k) {
            const VectorXd u = system.u_for_transition(k);
            const VectorXd& z = truth.measurements[static_cast<size_t>(k - 1)];
            StepRecord step;
            if (filter.is_iekf()) {
                const StateBelief pred = prop->predict(system, belief, u, k);
                step = iekf_update(system, pred, z, k, R);
            } else {
                step = run_step(system, *prop, filter.mode, belief, u, z, k, R);
            }
            belief = step.posterior;
            if (!belief.mean.allFinite() || !belief.cov.allFinite())
                throw NonFiniteEstimate("filter estimate left finite range");
            if (step.backed_out) ++rec.backouts;
            rec.abs_error_by_iteration.row(k - 1) =
                (belief.mean - truth.states[static_cast<size_t>(k - 1)]).cwiseAbs().transpose();
            last_step = k;
        }
    } catch (const NonFiniteEstimate&) {
        rec.diverged = true;
    } catch (const CholeskyFailure&) {
        rec.diverged = true;
    } catch (const SingularInnovation&) {
        rec.diverged = true;
    }
    const auto t1 = std::chrono::steady_clock::now();
    rec.filter_seconds = std::chrono::duration<double>(t1 - t0).count();
    (void)last_step;

    rec.final_error = belief.mean - truth.states.back();
    rec.posterior_cov_diag = belief.cov.diagonal();
    return rec;
}

namespace {

SweepCell aggregate_cell(const FilterConfig& filter, double sigma,
                         const std::vector<RunRecord>& records, int steps, int n_x) {
    SweepCell cell;
    cell.filter = filter;
    cell.sigma = sigma;
    cell.runs = static_cast<int>(records.size());

    VectorXd sq_final = VectorXd::Zero(n_x);
    VectorXd var_sum = VectorXd::Zero(n_x);
    MatrixXd sq_iter = MatrixXd::Zero(steps, n_x);
    double seconds = 0.0;
    long backouts = 0;
    int good = 0;
    for (const RunRecord& r : records) {
        seconds += r.filter_seconds;
        if (r.diverged) {
            ++cell.divergence_count;
            continue;
        }
        ++good;
        backouts += r.backouts;
        sq_final += r.final_error.cwiseAbs2();
        var_sum += r.posterior_cov_diag;
        sq_iter += r.abs_error_by_iteration.cwiseAbs2();
    }
    const double denom = std::max(good, 1);
    cell.rmse_final = (sq_final / denom).cwiseSqrt();
    cell.estimated_rmse = (var_sum / denom).cwiseMax(0.0).cwiseSqrt();
    cell.rmse_by_iteration = (sq_iter / denom).cwiseSqrt();
    cell.mean_step_time = seconds / (static_cast<double>(records.size()) * steps);
    cell.backout_rate = backouts / (denom * steps);
    return cell;
}

}  // namespace

SweepResult run_sweep(const ExperimentSpec& spec) {
    const SystemSpec system = build_system(spec.system_id);
    const size_t n_cells = spec.filters.size() * spec.sigmas.size();
    std::vector<std::vector<RunRecord>> records(n_cells);
    for (auto& v : records) v.resize(static_cast<size_t>(spec.runs));

    const auto cell_index = [&](size_t f, size_t s) { return f * spec.sigmas.size() + s; };

    std::atomic<int> next_run{0};
    const auto worker = [&] {
        for (;;) {
            const int r = next_run.fetch_add(1);
            if (r >= spec.runs) return;
            const NoiseBank bank = make_noise_bank(spec, system, r);
            for (size_t f = 0; f < spec.filters.size(); ++f)
                for (size_t s = 0; s < spec.sigmas.size(); ++s)
                    records[cell_index(f, s)][static_cast<size_t>(r)] = run_filter_once(
                        system, spec.filters[f], bank, spec.sigmas[s], spec.ukf_params);
        }
    };

    const int workers = std::max(1, spec.parallel_workers);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    SweepResult result;
    result.system_id = spec.system_id;
    result.master_seed = spec.master_seed;
    for (size_t f = 0; f < spec.filters.size(); ++f)
        for (size_t s = 0; s < spec.sigmas.size(); ++s)
            result.cells.push_back(aggregate_cell(spec.filters[f], spec.sigmas[s],
                                                  records[cell_index(f, s)], system.steps,
                                                  system.n_x));
    return result;
}

const SweepCell& SweepResult::cell(const std::string& label, double sigma) const {
    for (const auto& c : cells)
        if (c.filter.label() == label && c.sigma == sigma) return c;
    throw std::invalid_argument("no sweep cell " + label);
}

Eigen::VectorXd consistency_stats(const SweepCell& cell) {
    if (cell.runs - cell.divergence_count < 30)
        throw InsufficientSamples("consistency_stats needs >= 30 non-diverged runs");
    return cell.estimated_rmse.cwiseQuotient(cell.rmse_final);
}

std::map<std::string, double> timing_profile(const SweepResult& result, double sigma) {
    const double base = result.cell("ekf/old", sigma).mean_step_time;
    std::map<std::string, double> out;
    for (const auto& c : result.cells)
        if (c.sigma == sigma) out[c.filter.label()] = c.mean_step_time / base;
    return out;
}

void write_sweep_csv(std::ostream& os, const SweepResult& result) {
    os << "system,filter,framework,sigma,state_index,rmse_actual,rmse_estimated,"
          "mean_step_time_ns,backout_rate,divergence_count,runs,seed\n";
    char buf[512];
    for (const auto& c : result.cells) {
        const std::string framework =
            c.filter.is_iekf() ? "old"
                               : (c.filter.mode == FrameworkMode::Recalibrated ? "new" : "old");
        for (Eigen::Index j = 0; j < c.rmse_final.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%d,%d,%" PRIu64 "\n",
                          result.system_id.c_str(), c.filter.propagator.c_str(), framework.c_str(),
                          c.sigma, static_cast<int>(j), c.rmse_final[j], c.estimated_rmse[j],
                          c.mean_step_time * 1e9, c.backout_rate, c.divergence_count, c.runs,
                          static_cast<std::uint64_t>(result.master_seed));
            os << buf;
        }
    }
}

}  // namespace nlkf
