#pragma once

#include "rnp/random.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rnp::models {

enum class OptionSide { Call, Put };

struct BSParams {
    double spot = 1.0;
    double rate = 0.0; // continuously compounded, per annum
    double vol = 0.2;  // per sqrt(annum)
    double maturity = 1.0;

    double forward() const;
    double gross_rate() const;
};

double bs_price(const BSParams& p, double strike, OptionSide side);

// Lognormal closed forms for S_T under Black-Scholes.
double bs_quantile(const BSParams& p, double prob);
double bs_cdf(const BSParams& p, double x);
double bs_pdf(const BSParams& p, double x);
double bs_expected_square(const BSParams& p);  // E S_T^2 = F^2 exp(sigma^2 T)
double bs_expected_log(const BSParams& p);     // log S0 + (r - sigma^2/2) T
// Partial moments over [lo, hi]: E[S^order 1{lo < S <= hi}] for order 0,1,2
// and E[log(S) 1{...}] when order == -1.
double bs_partial_moment(const BSParams& p, int order, double lo, double hi);

struct GKParams {
    double spot = 1.0;
    double rate_domestic = 0.0;
    double rate_foreign = 0.0;
    double vol = 0.1;
    double maturity = 1.0;

    double forward() const;
};

double gk_price(const GKParams& p, double strike, OptionSide side);

// Premium-included spot delta (call: e^{-r_f T} (K/F) Phi(d2)); puts carry
// the usual negative sign.
double gk_delta_premium_adjusted(const GKParams& p, double strike, OptionSide side);

// Invert the premium-adjusted delta for the strike. Calls are restricted to
// the monotone branch right of the delta-maximizing strike; tolerance 1e-10
// in delta.
double delta_to_strike(const GKParams& p, double delta, OptionSide side);

// SVCJ risk-neutral dynamics (log price + variance with contemporaneous
// jumps). Parameter fields follow the calibration file layout.
struct SVCJParams {
    double kappa = 0.0;   // variance mean reversion, per time unit
    double theta = 0.0;   // long-run diffusive variance level
    double rho = 0.0;     // Brownian correlation
    double sigma_v = 0.0; // vol-of-variance, per sqrt(time unit)
    double mu_v = 0.0;    // mean of exponential variance jumps
    double mu_y = 0.0;    // mean log-price jump (conditional intercept)
    double rho_J = 0.0;   // loading of price jumps on variance jumps
    double sigma_y = 0.0; // stdev of log-price jumps
    double lambda = 0.0;  // jump intensity, per annum
    double r = 0.0;       // risk-free rate, per annum

    void validate() const;

    // E[e^{xi_y} - 1]: jump compensator for the risk-neutral drift.
    double jump_compensator() const;
    // Unconditional mean of V implied by (kappa, theta, lambda, mu_v) with
    // kappa expressed per annum; used as the default v0.
    double stationary_variance(double steps_per_year) const;
};

// Clock convention for (kappa, sigma_v): the shipped calibration quotes them
// per trading day; lambda is per annum and V is an annualized variance.
enum class TimeUnit { Daily, Annual };

struct TerminalSample {
    std::vector<double> values; // terminal prices, all positive
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    double v0 = 0.0;
    TimeUnit time_unit = TimeUnit::Daily;
};

// Euler scheme with full truncation for V; one counter-derived substream per
// path, so results are independent of scheduling.
TerminalSample svcj_simulate(const SVCJParams& p, double s0, double v0, double maturity,
                             std::size_t n_paths, std::size_t n_steps, std::uint64_t seed,
                             TimeUnit unit = TimeUnit::Daily);

// Negative v0 requests the stationary-mean default.
TerminalSample svcj_simulate_default_v0(const SVCJParams& p, double s0, double maturity,
                                        std::size_t n_paths, std::size_t n_steps,
                                        std::uint64_t seed, TimeUnit unit = TimeUnit::Daily);

struct McPrice {
    double price = 0.0;
    double standard_error = 0.0;
};

McPrice mc_price(const TerminalSample& sample, double rate, double maturity, double strike,
                 OptionSide side);

struct McMoment {
    double value = 0.0;
    double standard_error = 0.0;
};

// Sample mean of g(S_T) with its standard error.
McMoment mc_moment(const TerminalSample& sample, const std::function<double(double)>& g);

} // namespace rnp::models
