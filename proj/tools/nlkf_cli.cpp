#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nlkf/filter_core.hpp"
#include "nlkf/harness.hpp"
#include "nlkf/philox.hpp"
#include "nlkf/propagators.hpp"
#include "nlkf/systems.hpp"

namespace {

using namespace nlkf;

int default_workers() {
    if (const char* env = std::getenv("NLKF_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Grid syntax: a comma list of values, or lo..hi:log:n / lo..hi:lin:n.
std::vector<double> parse_sigma_grid(const std::string& text) {
    std::vector<double> out;
    const auto range_sep = text.find("..");
    if (range_sep != std::string::npos) {
        const auto c1 = text.find(':', range_sep);
        const auto c2 = text.find(':', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw std::invalid_argument("bad grid spec, expected lo..hi:log:n");
        const double lo = std::stod(text.substr(0, range_sep));
        const double hi = std::stod(text.substr(range_sep + 2, c1 - range_sep - 2));
        const std::string kind = text.substr(c1 + 1, c2 - c1 - 1);
        const int n = std::stoi(text.substr(c2 + 1));
        if (n < 1 || lo <= 0.0 || hi < lo) throw std::invalid_argument("bad grid bounds");
        for (int i = 0; i < n; ++i) {
            const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
            out.push_back(kind == "log" ? std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)))
                                        : lo + t * (hi - lo));
        }
        return out;
    }
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    if (out.empty()) throw std::invalid_argument("empty sigma grid");
    for (double s : out)
        if (s <= 0.0) throw std::invalid_argument("sigmas must be positive");
    return out;
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

void write_svg_plot(const std::string& path, const SweepResult& result) {
    // Minimal static log-log chart of state-0 actual RMSE vs sigma.
    std::ofstream os(path);
    const double W = 640, H = 480, ML = 60, MB = 40, MT = 20, MR = 20;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& c : result.cells) {
        const double y = c.rmse_final[0];
        if (!(y > 0.0)) continue;
        xmin = std::min(xmin, c.sigma);
        xmax = std::max(xmax, c.sigma);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (xmin >= xmax) xmax = xmin * 10;
    if (ymin >= ymax) ymax = ymin * 10;
    const auto X = [&](double s) {
        return ML + (std::log(s) - std::log(xmin)) / (std::log(xmax) - std::log(xmin)) * (W - ML - MR);
    };
    const auto Y = [&](double v) {
        return H - MB - (std::log(v) - std::log(ymin)) / (std::log(ymax) - std::log(ymin)) * (H - MB - MT);
    };
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
       << "' stroke='black'/>\n";
    os << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
       << "' stroke='black'/>\n";
    const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& c : result.cells)
        if (c.rmse_final[0] > 0.0) series[c.filter.label()].push_back({c.sigma, c.rmse_final[0]});
    int idx = 0;
    double legend_y = MT + 12;
    for (auto& [label, pts] : series) {
        std::sort(pts.begin(), pts.end());
        const char* color = colors[idx++ % 9];
        os << "<polyline fill='none' stroke='" << color << "' points='";
        for (auto& [s, v] : pts) os << X(s) << "," << Y(v) << " ";
        os << "'/>\n";
        os << "<text x='" << W - MR - 110 << "' y='" << legend_y << "' fill='" << color
           << "' font-size='12'>" << label << "</text>\n";
        legend_y += 14;
    }
    os << "<text x='" << W / 2 << "' y='" << H - 8 << "' font-size='12'>sigma</text>\n";
    os << "<text x='8' y='" << H / 2 << "' font-size='12'>rmse</text>\n";
    os << "</svg>\n";
}

struct SweepOptions {
    std::string system_id = "tracking3d";
    std::string filters = "ekf,ekf2,ukf,ckf";
    std::string frameworks = "old,new";
    std::string sigma_grid = "1e-4..1e1:log:11";
    int runs = 500;
    std::uint64_t seed = 1;
    int workers = default_workers();
    std::string output = "sweep.csv";
    bool plot = false;
};

int cmd_sweep(const SweepOptions& opt) {
    ExperimentSpec spec;
    spec.system_id = opt.system_id;
    bool known = false;
    for (const auto& id : system_ids()) known = known || id == opt.system_id;
    if (!known) {
        std::cerr << "unknown system '" << opt.system_id << "'; valid ids:";
        for (const auto& id : system_ids()) std::cerr << " " << id;
        std::cerr << "\n";
        return 2;
    }
    try {
        spec.sigmas = parse_sigma_grid(opt.sigma_grid);
    } catch (const std::exception& e) {
        std::cerr << "bad sigma grid: " << e.what() << "\n";
        return 2;
    }
    const auto frameworks = split_csv(opt.frameworks);
    for (const auto& name : split_csv(opt.filters)) {
        if (name == "iekf") {
            spec.filters.push_back({"iekf", FrameworkMode::Conventional});
            continue;
        }
        bool ok = false;
        for (const auto& id : propagator_ids()) ok = ok || id == name;
        if (!ok) {
            std::cerr << "unknown filter '" << name << "'; valid: ekf ekf2 ukf ckf iekf\n";
            return 2;
        }
        for (const auto& fw : frameworks) {
            if (fw != "old" && fw != "new") {
                std::cerr << "unknown framework '" << fw << "'; valid: old new\n";
                return 2;
            }
            spec.filters.push_back(
                {name, fw == "new" ? FrameworkMode::Recalibrated : FrameworkMode::Conventional});
        }
    }
    if (opt.runs < 1) {
        std::cerr << "runs must be >= 1\n";
        return 2;
    }
    spec.runs = opt.runs;
    spec.master_seed = opt.seed;
    spec.parallel_workers = opt.workers;

    const SweepResult result = run_sweep(spec);

    std::ofstream os(opt.output);
    if (!os) {
        std::cerr << "cannot open " << opt.output << " for writing\n";
        return 1;
    }
    write_sweep_csv(os, result);
    if (!os.flush()) {
        std::cerr << "write failed: " << opt.output << "\n";
        return 1;
    }
    if (opt.plot) {
        std::string svg = opt.output;
        const auto dot = svg.rfind('.');
        svg = (dot == std::string::npos ? svg : svg.substr(0, dot)) + ".svg";
        write_svg_plot(svg, result);
        std::cout << "wrote " << opt.output << " and " << svg << "\n";
    } else {
        std::cout << "wrote " << opt.output << "\n";
    }
    return 0;
}

struct TheoremOptions {
    int which = 1;
    int samples = 100000;
    std::uint64_t seed = 7;
    double noise_scale = 0.3;
    int dof = 8;
    bool dof_given = false;
    bool correlated = false;
    int n_x = 1;
    int n_m = 1;
};

int cmd_theorem(const TheoremOptions& opt) {
    if (opt.which != 1 && opt.which != 2) {
        std::cerr << "--which must be 1 or 2\n";
        return 2;
    }
    if (opt.samples < 2 || opt.n_x < 1 || opt.n_m < 1 || opt.dof <= opt.n_m - 1) {
        std::cerr << "bad sampling parameters\n";
        return 2;
    }
    // Without an explicit dof, zero noise-scale means no sampling noise
    // at all: the equality case.
    const int dof = (opt.noise_scale == 0.0 && !opt.dof_given) ? 0 : opt.dof;

    Eigen::MatrixXd P_xy, S;
    if (opt.n_x == 1 && opt.n_m == 1) {
        P_xy = Eigen::MatrixXd::Constant(1, 1, 1.0);
        S = Eigen::MatrixXd::Constant(1, 1, 1.0);
    } else {
        RandomStream rs(opt.seed, fnv1a32("theorem-setup"), 0, 0);
        P_xy.resize(opt.n_x, opt.n_m);
        for (Eigen::Index i = 0; i < P_xy.size(); ++i) P_xy(i) = rs.next_normal();
        Eigen::MatrixXd A(opt.n_m, opt.n_m);
        for (Eigen::Index i = 0; i < A.size(); ++i) A(i) = rs.next_normal();
        S = A * A.transpose() + Eigen::MatrixXd::Identity(opt.n_m, opt.n_m);
    }

    if (opt.which == 1) {
        const auto res = theorem1_check(P_xy, S, opt.noise_scale, dof, opt.samples, opt.seed);
        std::printf("mean-gap min eigenvalue: %.6e (jackknife stderr %.6e)\n", res.min_eig,
                    res.stderr_min_eig);
        const bool holds = res.min_eig >= -3.0 * res.stderr_min_eig;
        std::printf("claim E[P_ac - P_est] >= 0: %s at 3*stderr\n", holds ? "holds" : "VIOLATED");
        return holds ? 0 : 3;
    }
    const auto res = theorem2_check(P_xy, S, opt.noise_scale, dof, opt.samples, opt.seed,
                                    opt.correlated);
    std::printf("mean-bias spectral norm: %.6e (jackknife stderr %.6e)\n", res.norm,
                res.stderr_norm);
    const bool holds = res.norm <= 3.0 * res.stderr_norm;
    std::printf("claim E[P_new - P_ac] = 0: %s at 3*stderr%s\n", holds ? "holds" : "VIOLATED",
                opt.correlated ? " (correlated draws)" : "");
    return holds ? 0 : 3;
}

// Root of the cubic measurement map (it has exactly one real root).
double cubic_root(const std::function<double(double)>& c) {
    double lo = -5.0, hi = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if ((c(mid) > 0.0) == (c(hi) > 0.0))
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

int cmd_demo_cubic(double sigma_y) {
    SystemSpec s;
    s.id = "cubic-demo";
    s.n_x = 1;
    s.n_m = 1;
    s.n_u = 1;
    s.steps = 1;
    const auto cubic = [](double x) { return x * x * x / 3.0 - x * x / 8.0 - x + 1.5383; };
    s.f = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, int) { return x; };
    s.jac_f = [](const Eigen::VectorXd&, const Eigen::VectorXd&, int) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Identity(1, 1));
    };
    s.hess_f = [](const Eigen::VectorXd&, const Eigen::VectorXd&, int) {
        return std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Zero(1, 1)};
    };
    s.h = [cubic](const Eigen::VectorXd& x, const Eigen::VectorXd&, int) {
        return Eigen::VectorXd::Constant(1, cubic(x[0]));
    };
    s.jac_h = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, int) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Constant(1, 1, x[0] * x[0] - x[0] / 4.0 - 1.0));
    };
    s.hess_h = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, int) {
        return std::vector<Eigen::MatrixXd>{Eigen::MatrixXd::Constant(1, 1, 2.0 * x[0] - 0.25)};
    };
    s.Q = Eigen::MatrixXd::Zero(1, 1);
    s.P0 = Eigen::MatrixXd::Constant(1, 1, 1.5 * 1.5);
    s.R_of_sigma = [](double sg) { return Eigen::MatrixXd(Eigen::MatrixXd::Constant(1, 1, sg * sg)); };
    s.x0_true = Eigen::VectorXd::Zero(1);
    s.input = [](int) { return Eigen::VectorXd(Eigen::VectorXd::Zero(1)); };

    const double truth = cubic_root(cubic);
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, cubic(truth));  // noiseless
    const Eigen::MatrixXd R = s.R_of_sigma(sigma_y);
    const StateBelief prior(Eigen::VectorXd::Zero(1), s.P0);
    const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);

    std::printf("cubic measurement demo: true state %.6f, prior N(0, 1.5^2), sigma_y %g\n", truth,
                sigma_y);
    std::printf("%-6s %-12s %14s %14s %14s %10s\n", "method", "framework", "post mean", "post sd",
                "|error|", "backed out");
    for (const auto& id : propagator_ids()) {
        const auto prop = make_propagator(id);
        for (const auto mode : {FrameworkMode::Conventional, FrameworkMode::Recalibrated}) {
            const StepRecord rec = run_step(s, *prop, mode, prior, u, z, 1, R);
            std::printf("%-6s %-12s %14.6f %14.6f %14.6f %10s\n", id.c_str(),
                        mode == FrameworkMode::Conventional ? "conventional" : "recalibrated",
                        rec.posterior.mean[0], std::sqrt(rec.posterior.cov(0, 0)),
                        std::abs(rec.posterior.mean[0] - truth), rec.backed_out ? "yes" : "no");
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlinear Kalman filtering benchmarks: conventional vs recalibrated framework"};
    app.require_subcommand(1);
    app.set_config("--config");

    SweepOptions sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo RMSE sweep over measurement noise");
    sweep_cmd->add_option("--system", sweep.system_id, "system id (tracking3d, terrain, generator, pendulum, battery)");
    sweep_cmd->add_option("--filters", sweep.filters, "comma list of ekf,ekf2,ukf,ckf,iekf");
    sweep_cmd->add_option("--frameworks", sweep.frameworks, "comma list of old,new");
    sweep_cmd->add_option("--sigmas", sweep.sigma_grid, "comma list or lo..hi:log:n");
    sweep_cmd->add_option("--runs", sweep.runs, "Monte Carlo runs per cell");
    sweep_cmd->add_option("--seed", sweep.seed, "master seed");
    sweep_cmd->add_option("--workers", sweep.workers, "worker threads (default: NLKF_WORKERS or hardware)");
    sweep_cmd->add_option("--output", sweep.output, "CSV output path");
    sweep_cmd->add_flag("--plot", sweep.plot, "also write a log-log SVG next to the CSV");

    TheoremOptions theorem;
    auto* theorem_cmd = app.add_subcommand("theorem", "Monte Carlo verification of the covariance claims");
    theorem_cmd->add_option("--which", theorem.which, "1: gap PSD claim, 2: unbiasedness claim");
    theorem_cmd->add_option("--samples", theorem.samples, "Monte Carlo samples");
    theorem_cmd->add_option("--seed", theorem.seed, "sampling seed");
    theorem_cmd->add_option("--noise-scale", theorem.noise_scale, "cross-covariance perturbation scale");
    auto* dof_opt = theorem_cmd->add_option("--dof", theorem.dof, "Wishart degrees of freedom for the S draw");
    theorem_cmd->add_flag("--correlated", theorem.correlated, "reuse the update-point draw at recalibration");
    theorem_cmd->add_option("--nx", theorem.n_x, "state dimension");
    theorem_cmd->add_option("--nm", theorem.n_m, "measurement dimension");

    double demo_sigma = 0.01;
    auto* demo_cmd = app.add_subcommand("demo-cubic", "single-step cubic-measurement comparison");
    demo_cmd->add_option("--sigma-y", demo_sigma, "measurement standard deviation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    theorem.dof_given = dof_opt->count() > 0;

    try {
        if (sweep_cmd->parsed()) return cmd_sweep(sweep);
        if (theorem_cmd->parsed()) return cmd_theorem(theorem);
        if (demo_cmd->parsed()) return cmd_demo_cubic(demo_sigma);
    } catch (const std::ios_base::failure& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
