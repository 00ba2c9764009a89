#include "rnp/models.hpp"
#include "rnp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace rnp::models {

double BSParams::forward() const { return spot * std::exp(rate * maturity); }
double BSParams::gross_rate() const { return std::exp(rate * maturity); }

static void check_bs(const BSParams& p) {
    if (p.spot <= 0.0) throw DomainError("spot must be positive");
    if (p.vol <= 0.0) throw DomainError("vol must be positive");
    if (p.maturity <= 0.0) throw DomainError("maturity must be positive");
}

double bs_price(const BSParams& p, double strike, OptionSide side) {
    check_bs(p);
    if (strike <= 0.0) throw DomainError("strike must be positive");
    const double F = p.forward();
    const double s = p.vol * std::sqrt(p.maturity);
    const double df = std::exp(-p.rate * p.maturity);
    const double d1 = (std::log(F / strike) + 0.5 * s * s) / s;
    const double d2 = d1 - s;
    if (side == OptionSide::Call) return df * (F * norm_cdf(d1) - strike * norm_cdf(d2));
    return df * (strike * norm_cdf(-d2) - F * norm_cdf(-d1));
}

double bs_quantile(const BSParams& p, double prob) {
    check_bs(p);
    const double m = std::log(p.spot) + (p.rate - 0.5 * p.vol * p.vol) * p.maturity;
    return std::exp(m + p.vol * std::sqrt(p.maturity) * Rng::norm_ppf(prob));
}

double bs_cdf(const BSParams& p, double x) {
    if (x <= 0.0) return 0.0;
    const double m = std::log(p.spot) + (p.rate - 0.5 * p.vol * p.vol) * p.maturity;
    const double s = p.vol * std::sqrt(p.maturity);
    return norm_cdf((std::log(x) - m) / s);
}

double bs_pdf(const BSParams& p, double x) {
    if (x <= 0.0) return 0.0;
    const double m = std::log(p.spot) + (p.rate - 0.5 * p.vol * p.vol) * p.maturity;
    const double s = p.vol * std::sqrt(p.maturity);
    return norm_pdf((std::log(x) - m) / s) / (x * s);
}

double bs_expected_square(const BSParams& p) {
    const double F = p.forward();
    return F * F * std::exp(p.vol * p.vol * p.maturity);
}

double bs_expected_log(const BSParams& p) {
    return std::log(p.spot) + (p.rate - 0.5 * p.vol * p.vol) * p.maturity;
}

double bs_partial_moment(const BSParams& p, int order, double lo, double hi) {
    check_bs(p);
    const double m = std::log(p.spot) + (p.rate - 0.5 * p.vol * p.vol) * p.maturity;
    const double s = p.vol * std::sqrt(p.maturity);
    auto z = [&](double x) {
        if (x <= 0.0) return -40.0;
        return std::min(40.0, std::max(-40.0, (std::log(x) - m) / s));
    };
    const double zlo = z(lo), zhi = std::isinf(hi) ? 40.0 : z(hi);
    switch (order) {
    case 0:
        return norm_cdf(zhi) - norm_cdf(zlo);
    case 1:
        return std::exp(m + 0.5 * s * s) * (norm_cdf(zhi - s) - norm_cdf(zlo - s));
    case 2:
        return std::exp(2.0 * m + 2.0 * s * s) *
               (norm_cdf(zhi - 2.0 * s) - norm_cdf(zlo - 2.0 * s));
    case -1: // E[log S 1{lo < S <= hi}]
        return m * (norm_cdf(zhi) - norm_cdf(zlo)) + s * (norm_pdf(zlo) - norm_pdf(zhi));
    default:
        throw DomainError("unsupported partial moment order");
    }
}

// ---------------------------------------------------------------------------
// Garman-Kohlhagen and FX delta conventions
// ---------------------------------------------------------------------------

double GKParams::forward() const {
    return spot * std::exp((rate_domestic - rate_foreign) * maturity);
}

double gk_price(const GKParams& p, double strike, OptionSide side) {
    // Black on the forward with carry r_dom - r_for, discounted at r_dom.
    if (strike <= 0.0) throw DomainError("strike must be positive");
    const double F = p.forward();
    const double s = p.vol * std::sqrt(p.maturity);
    const double df = std::exp(-p.rate_domestic * p.maturity);
    const double d1 = (std::log(F / strike) + 0.5 * s * s) / s;
    const double d2 = d1 - s;
    if (side == OptionSide::Call) return df * (F * norm_cdf(d1) - strike * norm_cdf(d2));
    return df * (strike * norm_cdf(-d2) - F * norm_cdf(-d1));
}

double gk_delta_premium_adjusted(const GKParams& p, double strike, OptionSide side) {
    const double F = p.forward();
    const double s = p.vol * std::sqrt(p.maturity);
    const double d2 = (std::log(F / strike) - 0.5 * s * s) / s;
    const double scale = std::exp(-p.rate_foreign * p.maturity) * strike / F;
    return side == OptionSide::Call ? scale * norm_cdf(d2) : -scale * norm_cdf(-d2);
}

namespace {

// Strike maximizing the premium-adjusted call delta: solve
// Phi(d2) = phi(d2)/s for d2, then K = F exp(-d2 s - s^2/2).
double call_delta_peak_strike(const GKParams& p) {
    const double s = p.vol * std::sqrt(p.maturity);
    double lo = -s + 1e-12, hi = 40.0;
    auto h = [&](double t) { return norm_cdf(t) - norm_pdf(t) / s; };
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) < 0.0 ? lo : hi) = mid;
    }
    const double d2 = 0.5 * (lo + hi);
    return p.forward() * std::exp(-d2 * s - 0.5 * s * s);
}

double brent_delta_root(const GKParams& p, OptionSide side, double target, double klo,
                        double khi) {
    auto f = [&](double k) { return gk_delta_premium_adjusted(p, k, side) - target; };
    double a = klo, b = khi, fa = f(a), fb = f(b);
    if (fa * fb > 0.0) throw NumericalError("delta root not bracketed");
    for (int i = 0; i < 400; ++i) {
        const double mid = 0.5 * (a + b);
        const double fm = f(mid);
        if (std::abs(fm) < 1e-10 || 0.5 * (b - a) < 1e-15 * khi) return mid;
        if (fa * fm <= 0.0) {
            b = mid;
            fb = fm;
        } else {
            a = mid;
            fa = fm;
        }
    }
    (void)fb;
    return 0.5 * (a + b);
}

} // namespace

double delta_to_strike(const GKParams& p, double delta, OptionSide side) {
    if (p.vol <= 0.0 || p.maturity <= 0.0) throw DomainError("vol and maturity must be positive");
    const double F = p.forward();
    const double s = p.vol * std::sqrt(p.maturity);
    const double klo = F * std::exp(-5.0 * s);
    const double khi = F * std::exp(5.0 * s);
    if (side == OptionSide::Call) {
        if (delta <= 0.0) throw DomainError("call delta must be positive");
        const double kpeak = call_delta_peak_strike(p);
        const double dmax = gk_delta_premium_adjusted(p, kpeak, OptionSide::Call);
        if (delta >= dmax) {
            char buf[96];
            std::snprintf(buf, sizeof(buf),
                          "call delta %.6f unattainable under premium-adjusted convention "
                          "(max %.6f)",
                          delta, dmax);
            throw DomainError(buf);
        }
        // Monotone branch right of the delta-maximizing strike.
        return brent_delta_root(p, side, delta, kpeak, khi);
    }
    if (delta >= 0.0) throw DomainError("put delta must be negative");
    const double dlo = gk_delta_premium_adjusted(p, klo, OptionSide::Put);
    const double dhi = gk_delta_premium_adjusted(p, khi, OptionSide::Put);
    if (delta > dlo || delta < dhi) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "put delta %.6f outside attainable bracket [%.6f, %.6f]", delta, dhi, dlo);
        throw DomainError(buf);
    }
    return brent_delta_root(p, side, delta, klo, khi);
}

// ---------------------------------------------------------------------------
// SVCJ
// ---------------------------------------------------------------------------

void SVCJParams::validate() const {
    if (kappa < 0.0 || theta < 0.0 || sigma_v < 0.0 || mu_v < 0.0 || sigma_y < 0.0 ||
        lambda < 0.0)
        throw DomainError("kappa, theta, sigma_v, mu_v, sigma_y, lambda must be nonnegative");
    if (std::abs(rho) > 1.0) throw DomainError("|rho| must not exceed 1");
    if (rho_J * mu_v >= 1.0)
        throw DomainError("rho_J * mu_v must be below 1 for the jump compensator to exist");
}

double SVCJParams::jump_compensator() const {
    return std::exp(mu_y + 0.5 * sigma_y * sigma_y) / (1.0 - rho_J * mu_v) - 1.0;
}

double SVCJParams::stationary_variance(double steps_per_year) const {
    const double kappa_annual = kappa * steps_per_year;
    if (kappa_annual <= 0.0) return theta;
    return theta + lambda * mu_v / kappa_annual;
}

TerminalSample svcj_simulate(const SVCJParams& p, double s0, double v0, double maturity,
                             std::size_t n_paths, std::size_t n_steps, std::uint64_t seed,
                             TimeUnit unit) {
    p.validate();
    if (s0 <= 0.0) throw DomainError("s0 must be positive");
    if (v0 < 0.0) throw DomainError("v0 must be nonnegative");
    if (n_paths < 1 || n_steps < 1) throw DomainError("n_paths and n_steps must be at least 1");

    // Annualize the variance-dynamics clock; lambda and r are already per
    // annum, V and mu_v are annualized variances.
    const double clock = unit == TimeUnit::Daily ? 252.0 : 1.0;
    const double kappa = p.kappa * clock;
    const double sigma_v = p.sigma_v * std::sqrt(clock);
    const double dt = maturity / static_cast<double>(n_steps);
    const double sdt = std::sqrt(dt);
    const double comp = p.lambda * p.jump_compensator();
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - p.rho * p.rho));

    TerminalSample out;
    out.values.resize(n_paths);
    out.seed = seed;
    out.n_paths = n_paths;
    out.n_steps = n_steps;
    out.v0 = v0;
    out.time_unit = unit;

    for (std::size_t path = 0; path < n_paths; ++path) {
        Rng rng = Rng::substream(seed, {0x5643u, path});
        double x = std::log(s0);
        double v = v0;
        for (std::size_t step = 0; step < n_steps; ++step) {
            const double vplus = std::max(v, 0.0); // full truncation
            const double z1 = rng.normal();
            const double z2 = rng.normal();
            const double zv = p.rho * z1 + rho_c * z2;
            double jump_y = 0.0, jump_v = 0.0;
            const int nj = rng.poisson(p.lambda * dt);
            for (int j = 0; j < nj; ++j) {
                const double xv = p.mu_v > 0.0 ? rng.exponential(p.mu_v) : 0.0;
                jump_v += xv;
                jump_y += p.mu_y + p.rho_J * xv + p.sigma_y * rng.normal();
            }
            x += (p.r - comp - 0.5 * vplus) * dt + std::sqrt(vplus) * sdt * z1 + jump_y;
            v += kappa * (p.theta - vplus) * dt + sigma_v * std::sqrt(vplus) * sdt * zv + jump_v;
        }
        out.values[path] = std::exp(x);
    }
    return out;
}

TerminalSample svcj_simulate_default_v0(const SVCJParams& p, double s0, double maturity,
                                        std::size_t n_paths, std::size_t n_steps,
                                        std::uint64_t seed, TimeUnit unit) {
    const double v0 = p.stationary_variance(unit == TimeUnit::Daily ? 252.0 : 1.0);
    return svcj_simulate(p, s0, v0, maturity, n_paths, n_steps, seed, unit);
}

McPrice mc_price(const TerminalSample& sample, double rate, double maturity, double strike,
                 OptionSide side) {
    if (sample.values.empty()) throw ValidationError("empty terminal sample");
    const double df = std::exp(-rate * maturity);
    double sum = 0.0, sum2 = 0.0;
    for (double s : sample.values) {
        const double pay =
            side == OptionSide::Call ? std::max(s - strike, 0.0) : std::max(strike - s, 0.0);
        sum += pay;
        sum2 += pay * pay;
    }
    const double n = static_cast<double>(sample.values.size());
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    return McPrice{df * mean, df * std::sqrt(var / n)};
}

McMoment mc_moment(const TerminalSample& sample, const std::function<double(double)>& g) {
    if (sample.values.empty()) throw ValidationError("empty terminal sample");
    double sum = 0.0, sum2 = 0.0;
    for (double s : sample.values) {
        const double v = g(s);
        sum += v;
        sum2 += v * v;
    }
    const double n = static_cast<double>(sample.values.size());
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    return McMoment{mean, std::sqrt(var / n)};
}

} // namespace rnp::models
