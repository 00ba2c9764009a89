#include "rnp/fx.hpp"
#include "rnp/errors.hpp"
#include "rnp/random.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <array>
#include <cmath>

namespace rnp::fx {

void FXMarket::validate() const {
    if (spot1 <= 0.0 || spot2 <= 0.0) throw DomainError("spots must be positive");
    if (gross_usd <= 0.0 || gross_gbp <= 0.0 || gross_eur <= 0.0)
        throw DomainError("gross rates must be positive");
    for (const auto& [k, v] : calls1)
        if (k <= 0.0 || v < 0.0) throw ValidationError("bad S1 call quote");
    for (const auto& [k, v] : calls2)
        if (k <= 0.0 || v < 0.0) throw ValidationError("bad S2 call quote");
    for (const auto& [k, v] : cross_calls)
        if (k <= 0.0 || v < 0.0) throw ValidationError("bad cross call quote");
    // Triangular parity is automatic when forwards derive from CIP; verify
    // the stored rates produce a consistent cross forward.
    const double f3 = forward1() / forward2();
    const double f3_direct = (spot1 / spot2) * (gross_gbp / gross_eur);
    if (std::abs(f3 - f3_direct) > 1e-10 * std::max(1.0, f3))
        throw ValidationError("triangular parity violated in FX market inputs");
}

MarketQuotes FXMarket::to_quotes() const {
    MarketQuotes q;
    q.gross_rate = gross_usd;
    q.assets[0] = AssetQuotes{forward1(), {}, calls1};
    q.assets[1] = AssetQuotes{forward2(), {}, calls2};
    q.cross = CrossQuotes{spot2, gross_gbp, cross_calls};
    return q;
}

BasisSet build_fx_basis(const std::vector<double>& strikes1, const std::vector<double>& strikes2,
                        const std::vector<double>& strikes_cross) {
    if (strikes1.empty() || strikes2.empty())
        throw ValidationError("both legs need a nonempty strike list");
    return BasisSet::fx(strikes1, strikes2, strikes_cross);
}

Vec price_fx_basis_expectations(const FXMarket& market, const BasisSet& basis) {
    market.validate();
    const MarketQuotes q = market.to_quotes();
    Vec p(basis.size());
    for (std::size_t j = 0; j < basis.size(); ++j)
        p(static_cast<Eigen::Index>(j)) = q.expectation(basis.elements[j]);
    return p;
}

namespace {

// Shared tensor fit: factor the normal equations once per basis/grid pair
// and reuse for several targets.
struct TensorFit {
    DesignMatrix design;
    Eigen::LDLT<Mat> ldlt;

    TensorFit(const BasisSet& basis, const JointGrid& grids)
        : design(eval_design(basis, {grids.grid1, grids.grid2})) {
        const Mat G = design.values.transpose() * design.values;
        ldlt.compute(G);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("FX design normal equations not positive definite");
    }

    Vec solve(const std::function<double(double, double)>& g, const JointGrid& grids) const {
        Vec y(design.values.rows());
        Eigen::Index r = 0;
        for (double s1 : grids.grid1.points)
            for (double s2 : grids.grid2.points) y(r++) = g(s1, s2);
        const Vec rhs = design.values.transpose() * y;
        Vec beta = ldlt.solve(rhs);
        beta += ldlt.solve(rhs - design.values.transpose() * (design.values * beta));
        return beta;
    }
};

double univariate_variance_leg(const FXMarket& market, const BasisSet& basis, int asset,
                               const StateGrid& grid) {
    // Gather this leg's calls from the joint basis.
    std::vector<double> strikes;
    for (const auto& e : basis.elements)
        if (e.kind == PayoffKind::Call && e.asset == asset) strikes.push_back(e.strike);
    BasisSet leg;
    leg.elements.push_back({PayoffKind::Bond});
    leg.elements.push_back({PayoffKind::Underlying, 0});
    for (double k : strikes) leg.elements.push_back({PayoffKind::Call, 0, 0, k});
    leg.validate();

    const double fwd = asset == 0 ? market.forward1() : market.forward2();
    MarketQuotes q;
    q.gross_rate = market.gross_usd;
    q.assets[0] = AssetQuotes{fwd, {}, asset == 0 ? market.calls1 : market.calls2};
    auto g = [fwd](double s) { return (s - fwd) * (s - fwd); };
    return estimate_moment(g, leg, grid, q).estimate;
}

} // namespace

FxDependence fx_covariance(const FXMarket& market, const BasisSet& basis, const JointGrid& grids) {
    market.validate();
    bool has_cross = false;
    for (const auto& e : basis.elements)
        if (e.kind == PayoffKind::CrossCall) has_cross = true;
    if (!has_cross)
        throw ValidationError("fx_covariance needs cross-rate strikes in the basis "
                              "(without them the separable estimate forces zero correlation)");

    const double f1 = market.forward1();
    const double f2 = market.forward2();
    TensorFit fit(basis, grids);
    const Vec beta =
        fit.solve([&](double s1, double s2) { return (s1 - f1) * (s2 - f2); }, grids);
    const Vec p = price_fx_basis_expectations(market, basis);

    FxDependence out;
    out.covariance = beta.dot(p);
    out.var1 = univariate_variance_leg(market, basis, 0, grids.grid1);
    out.var2 = univariate_variance_leg(market, basis, 1, grids.grid2);
    if (out.var1 <= 0.0 || out.var2 <= 0.0)
        throw NumericalError("nonpositive projected leg variance");
    out.correlation = out.covariance / std::sqrt(out.var1 * out.var2);
    return out;
}

TailEstimate joint_tail_probability(const FXMarket& market, const BasisSet& basis,
                                    const JointGrid& grids, double q1, double q2) {
    market.validate();
    if (q1 < grids.grid1.a_min() || q1 > grids.grid1.a_max() || q2 < grids.grid2.a_min() ||
        q2 > grids.grid2.a_max())
        throw DomainError("tail threshold outside the grid bounds");
    TensorFit fit(basis, grids);
    const Vec beta = fit.solve(
        [&](double s1, double s2) { return (s1 <= q1 && s2 <= q2) ? 1.0 : 0.0; }, grids);
    const Vec p = price_fx_basis_expectations(market, basis);
    TailEstimate out;
    out.raw = beta.dot(p);
    out.probability = std::min(1.0, std::max(0.0, out.raw));
    return out;
}

// ---------------------------------------------------------------------------
// SimulatedFxWorld
// ---------------------------------------------------------------------------

namespace {

// 64-point Gauss-Legendre nodes/weights on [-1, 1] via Newton on Legendre
// polynomials; computed once.
struct GaussLegendre {
    std::array<double, 64> x{};
    std::array<double, 64> w{};

    GaussLegendre() {
        const int n = 64;
        for (int i = 0; i < n / 2; ++i) {
            double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = t;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                const double dp = n * (t * p1 - p0) / (t * t - 1.0);
                const double dt = p1 / dp;
                t -= dt;
                if (std::abs(dt) < 1e-15) break;
            }
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (t * p1 - p0) / (t * t - 1.0);
            x[i] = -t;
            x[n - 1 - i] = t;
            w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
            w[n - 1 - i] = w[i];
        }
    }
};

const GaussLegendre& gl64() {
    static const GaussLegendre g;
    return g;
}

double integrate_gl(const std::function<double(double)>& f, double lo, double hi, int panels) {
    const auto& g = gl64();
    double acc = 0.0;
    const double step = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        const double a = lo + p * step;
        const double mid = a + 0.5 * step;
        const double half = 0.5 * step;
        for (int i = 0; i < 64; ++i) acc += g.w[i] * f(mid + half * g.x[i]) * half;
    }
    return acc;
}

double brent_root(const std::function<double(double)>& f, double lo, double hi) {
    double a = lo, b = hi, fa = f(a), fb = f(b);
    if (fa * fb > 0.0) throw NumericalError("root not bracketed");
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (a + b);
        const double fm = f(mid);
        if (std::abs(fm) < 1e-14 || (b - a) < 1e-13 * std::max(1.0, std::abs(mid))) return mid;
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

// E (X - k)+ for X ~ N(m, s^2).
double normal_call(double m, double s, double k) {
    if (s <= 0.0) return std::max(m - k, 0.0);
    const double d = (m - k) / s;
    return (m - k) * norm_cdf(d) + s * norm_pdf(d);
}

} // namespace

SimulatedFxWorld::SimulatedFxWorld(const FxWorldParams& p) : p_(p) {
    if (p_.sd1 <= 0.0 || p_.sd2 <= 0.0) throw DomainError("sd1, sd2 must be positive");
    if (std::abs(p_.rho) > 1.0) throw DomainError("|rho| must not exceed 1");
    // E[Z2 + cubic S1^3] = mu2 + cubic (mu1^3 + 3 mu1 sd1^2); normalize so the
    // perturbed rate keeps mean mu2.
    const double es1_cubed = p_.mu1 * p_.mu1 * p_.mu1 + 3.0 * p_.mu1 * p_.sd1 * p_.sd1;
    norm_ = (p_.mu2 + p_.cubic * es1_cubed) / p_.mu2;
}

double SimulatedFxWorld::cond_mean(double s1) const {
    const double z2 = p_.mu2 + p_.rho * p_.sd2 / p_.sd1 * (s1 - p_.mu1);
    return (z2 + p_.cubic * s1 * s1 * s1) / norm_;
}

double SimulatedFxWorld::cond_sd() const {
    return p_.sd2 * std::sqrt(std::max(0.0, 1.0 - p_.rho * p_.rho)) / norm_;
}

double SimulatedFxWorld::integrate_s1(const std::function<double(double)>& f, double lo,
                                      double hi) const {
    if (hi <= lo) return 0.0;
    return integrate_gl(f, lo, hi, 8);
}

double SimulatedFxWorld::call1(double k) const { return normal_call(p_.mu1, p_.sd1, k); }

double SimulatedFxWorld::call2(double k) const {
    const double t = cond_sd();
    auto f = [&](double s1) {
        return norm_pdf((s1 - p_.mu1) / p_.sd1) / p_.sd1 * normal_call(cond_mean(s1), t, k);
    };
    return integrate_s1(f, p_.mu1 - 9.0 * p_.sd1, p_.mu1 + 9.0 * p_.sd1);
}

double SimulatedFxWorld::cross_call_usd(double k) const {
    const double t = cond_sd();
    auto f = [&](double s1) {
        // (S1 - k S2) | S1 ~ N(s1 - k m(s1), k^2 t^2)
        return norm_pdf((s1 - p_.mu1) / p_.sd1) / p_.sd1 *
               normal_call(s1 - k * cond_mean(s1), k * t, 0.0);
    };
    return integrate_s1(f, p_.mu1 - 9.0 * p_.sd1, p_.mu1 + 9.0 * p_.sd1);
}

double SimulatedFxWorld::cdf1(double x) const { return norm_cdf((x - p_.mu1) / p_.sd1); }

double SimulatedFxWorld::cdf2(double x) const {
    const double t = cond_sd();
    auto f = [&](double s1) {
        return norm_pdf((s1 - p_.mu1) / p_.sd1) / p_.sd1 *
               norm_cdf((x - cond_mean(s1)) / t);
    };
    return integrate_s1(f, p_.mu1 - 9.0 * p_.sd1, p_.mu1 + 9.0 * p_.sd1);
}

double SimulatedFxWorld::cdf_ratio(double q) const {
    if (q <= 0.0) return 0.0;
    const double t = cond_sd();
    auto f = [&](double s1) {
        return norm_pdf((s1 - p_.mu1) / p_.sd1) / p_.sd1 *
               norm_cdf((cond_mean(s1) - s1 / q) / t);
    };
    return integrate_s1(f, p_.mu1 - 9.0 * p_.sd1, p_.mu1 + 9.0 * p_.sd1);
}

double SimulatedFxWorld::quantile1(double p) const {
    return p_.mu1 + p_.sd1 * Rng::norm_ppf(p);
}

double SimulatedFxWorld::quantile2(double p) const {
    const double lo = p_.mu2 - 12.0 * p_.sd2 / norm_ - std::abs(p_.cubic) * 5.0;
    const double hi = p_.mu2 + 12.0 * p_.sd2 / norm_ + std::abs(p_.cubic) * 5.0;
    return brent_root([&](double x) { return cdf2(x) - p; }, lo, hi);
}

double SimulatedFxWorld::quantile_ratio(double p) const {
    return brent_root([&](double q) { return cdf_ratio(q) - p; }, 0.05, 20.0);
}

double SimulatedFxWorld::true_covariance() const {
    const double t = cond_sd();
    auto f = [&](double s1) {
        return norm_pdf((s1 - p_.mu1) / p_.sd1) / p_.sd1 * s1 * cond_mean(s1);
    };
    const double e12 = integrate_s1(f, p_.mu1 - 9.0 * p_.sd1, p_.mu1 + 9.0 * p_.sd1);
    (void)t;
    return e12 - p_.mu1 * p_.mu2;
}

double SimulatedFxWorld::true_correlation() const {
    const double t = cond_sd();
    auto f = [&](double s1) {
        const double m = cond_mean(s1);
        return norm_pdf((s1 - p_.mu1) / p_.sd1) / p_.sd1 * (m * m + t * t);
    };
    const double e22 = integrate_s1(f, p_.mu1 - 9.0 * p_.sd1, p_.mu1 + 9.0 * p_.sd1);
    const double var2 = e22 - p_.mu2 * p_.mu2;
    return true_covariance() / (p_.sd1 * std::sqrt(var2));
}

double SimulatedFxWorld::true_tail(double q1, double q2) const {
    const double t = cond_sd();
    auto f = [&](double s1) {
        return norm_pdf((s1 - p_.mu1) / p_.sd1) / p_.sd1 *
               norm_cdf((q2 - cond_mean(s1)) / t);
    };
    return integrate_s1(f, p_.mu1 - 9.0 * p_.sd1, q1);
}

double SimulatedFxWorld::cross_call_by_quadrature(double k) const {
    // Integrate (s1 - k s2)+ against the joint density of (S1, Z2), with the
    // inner integral split at the payoff kink; no call-formula shortcuts.
    const double t_raw = p_.sd2 * std::sqrt(std::max(0.0, 1.0 - p_.rho * p_.rho));
    auto inner = [&](double s1) {
        const double z2_mean = p_.mu2 + p_.rho * p_.sd2 / p_.sd1 * (s1 - p_.mu1);
        // payoff in terms of z2: (s1 - k (z2 + cubic s1^3)/norm)+ ; kink at
        // z2* = norm s1 / k - cubic s1^3.
        const double zstar = norm_ * s1 / k - p_.cubic * s1 * s1 * s1;
        const double lo = z2_mean - 10.0 * t_raw;
        const double hi = std::min(zstar, z2_mean + 10.0 * t_raw);
        if (hi <= lo) return 0.0;
        auto f = [&](double z2) {
            const double s2 = (z2 + p_.cubic * s1 * s1 * s1) / norm_;
            return (s1 - k * s2) * norm_pdf((z2 - z2_mean) / t_raw) / t_raw;
        };
        return integrate_gl(f, lo, hi, 4);
    };
    auto outer = [&](double s1) {
        return norm_pdf((s1 - p_.mu1) / p_.sd1) / p_.sd1 * inner(s1);
    };
    return integrate_gl(outer, p_.mu1 - 9.0 * p_.sd1, p_.mu1 + 9.0 * p_.sd1, 8);
}

FXMarket SimulatedFxWorld::make_market(const std::vector<double>& strikes1,
                                       const std::vector<double>& strikes2,
                                       const std::vector<double>& strikes_cross) const {
    FXMarket m;
    m.gross_usd = m.gross_gbp = m.gross_eur = 1.0;
    m.spot1 = p_.mu1; // unit rates: forwards equal spots equal means
    m.spot2 = p_.mu2;
    for (double k : strikes1) m.calls1[k] = call1(k);
    for (double k : strikes2) m.calls2[k] = call2(k);
    for (double k : strikes_cross)
        m.cross_calls[k] = cross_call_usd(k) / (m.gross_usd * m.spot2);
    return m;
}

} // namespace rnp::fx
