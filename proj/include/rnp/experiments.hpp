#pragma once

#include "rnp/models.hpp"
#include "rnp/multi_asset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rnp::experiments {

struct UnivariateConfig {
    std::vector<std::string> models{"bs", "svcj"};
    std::vector<std::string> designs{"equal_spaced", "uniform_random"};
    std::vector<int> n_k{10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130};
    std::string range_mode = "fixed_fraction"; // or "varying_range"
    double strike_mass = 0.90;                 // central probability mass covered by strikes
    std::vector<double> tail_probs{0.25, 0.20, 0.15, 0.10, 0.05, 0.02, 0.01, 0.005, 0.002};
    int varying_n_k = 30;
    int n_mc = 500;
    std::size_t grid_points = 2001;
    double domain_mass = 0.998; // A covers this probability mass
    models::BSParams bs{1.0, 0.05, 0.20, 1.0};
    models::SVCJParams svcj; // table calibration by default
    std::string svcj_time_unit = "daily";
    std::size_t svcj_paths = 2000000;
    std::size_t svcj_steps = 252;
};

struct FxConfig {
    std::vector<std::string> designs{"normal", "nonlinear"};
    int n_draws = 1000;
    int n_strikes = 5;
    std::size_t grid_points = 201;
    double strike_lo = 0.05, strike_hi = 0.95; // percentile placement
    double grid_lo = 0.02, grid_hi = 0.98;
    double tail_q1 = 0.95, tail_q2 = 0.95;
    double mu1 = 1.0, mu2 = 1.0, sd1 = 0.10, sd2 = 0.05;
    double cubic = 0.10; // nonlinear-dependence coefficient
    double corr_mae_threshold = 0.05;
    double tail_mae_threshold = 0.01;
};

struct SectorConfig {
    int n_assets = 11;
    int n_mc = 1000;
    std::size_t oracle_draws = 1000000;
    double sigma_f1 = 0.15, sigma_f2 = 0.10;
    double sigma_idio = 0.10;
    double b_lo = -0.4, b_hi = 1.0;
    double winsor_lo = 0.4, winsor_hi = 1.5;
    double box_sigmas = 3.0;
    std::vector<double> value_weights{0.28,  0.13,  0.13, 0.11, 0.09, 0.08,
                                      0.06,  0.04,  0.03, 0.025, 0.025};
};

struct ExperimentConfig {
    std::string study; // univariate_convergence | fx_recovery | sector_mse
    std::uint64_t seed = 42;
    UnivariateConfig univariate;
    FxConfig fx;
    SectorConfig sector;
};

ExperimentConfig parse_config_json(const std::string& json_text);
std::string default_config_json(const std::string& study);

// Typed result rows, exposed so the acceptance suite can evaluate criteria
// without re-parsing CSV.
struct UnivariateRow {
    std::string model;
    std::string design;
    int n_k = 0;
    double tail_prob = 0.0; // varying-range runs
    int rep = 0;
    std::string target; // svix | vix
    double truth = 0.0; // squared index level
    double proj = 0.0;
    double cm = 0.0;
    double proj_rel = 0.0;
    double cm_rel = 0.0;
};

struct FxRow {
    std::string design;
    int rep = 0;
    double true_corr = 0.0;
    double est_corr = 0.0;
    double true_tail = 0.0;
    double est_tail = 0.0;
    double est_tail_raw = 0.0;
};

struct SectorRow {
    int rep = 0;
    double mse_equicorr = 0.0;
    double mse_projection = 0.0;
    double truth_estimate_corr = 0.0; // within-run correlation
};

struct StudyOutput {
    std::string study;
    std::string results_csv;
    std::string summary_csv;
    std::string meta_json;
    std::vector<UnivariateRow> univariate_rows;
    std::vector<FxRow> fx_rows;
    std::vector<SectorRow> sector_rows;
};

StudyOutput run_univariate_convergence(const ExperimentConfig& config);
StudyOutput run_fx_recovery(const ExperimentConfig& config);
StudyOutput run_sector_mse(const ExperimentConfig& config);
StudyOutput run_study(const ExperimentConfig& config);

// Writes results.csv, summary.csv, meta.json into out_dir (created if needed).
void write_study(const StudyOutput& out, const std::string& out_dir);

// Parallel loop over [0, n); honors the RNP_THREADS cap. Items must be
// independent; results keyed by index so ordering is deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace rnp::experiments
