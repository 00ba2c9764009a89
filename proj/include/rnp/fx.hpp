#pragma once

#include "rnp/projector.hpp"

#include <map>
#include <vector>

namespace rnp::fx {

// Two dollar rates (S1 = EUR/USD, S2 = GBP/USD) plus GBP-quoted options on
// the cross S3 = S1/S2. Forwards follow covered interest parity.
struct FXMarket {
    double spot1 = 0.0;
    double spot2 = 0.0;
    double gross_usd = 1.0; // R_f
    double gross_gbp = 1.0; // R_f^gbp
    double gross_eur = 1.0; // R_f^eur
    std::map<double, double> calls1;      // USD-quoted on S1
    std::map<double, double> calls2;      // USD-quoted on S2
    std::map<double, double> cross_calls; // GBP-quoted on S3

    double forward1() const { return spot1 * gross_usd / gross_eur; }
    double forward2() const { return spot2 * gross_usd / gross_gbp; }
    double forward_cross() const { return forward1() / forward2(); }

    void validate() const;
    // Asset 0 = S1, asset 1 = S2; cross calls carried with their conversion
    // factors (spot2, gross_gbp).
    MarketQuotes to_quotes() const;
};

struct JointGrid {
    StateGrid grid1;
    StateGrid grid2; // rows run with S1 outermost, S2 innermost
};

// [Bond, U1, Calls1.., U2, Calls2.., CrossCalls..]; duplicate strikes within
// a leg are rejected.
BasisSet build_fx_basis(const std::vector<double>& strikes1, const std::vector<double>& strikes2,
                        const std::vector<double>& strikes_cross);

// Expectation of each basis element under the USD risk-neutral measure:
// Bond -> 1, U_i -> F_i, Call_i -> R_f C_i(K), CrossCall -> R_f S2_t C_gbp(K).
Vec price_fx_basis_expectations(const FXMarket& market, const BasisSet& basis);

struct FxDependence {
    double covariance = 0.0;
    double correlation = 0.0;
    double var1 = 0.0;
    double var2 = 0.0;
};

// Project (S1-F1)(S2-F2) on the tensor design and price it; per-leg
// variances come from univariate projections of (S_i-F_i)^2.
FxDependence fx_covariance(const FXMarket& market, const BasisSet& basis, const JointGrid& grids);

struct TailEstimate {
    double probability = 0.0; // clipped to [0,1]
    double raw = 0.0;         // pre-clip value
};

// Joint left-tail P(S1 <= q1, S2 <= q2); indicators use the half-open
// convention 1{s <= q} with grid points at q included.
TailEstimate joint_tail_probability(const FXMarket& market, const BasisSet& basis,
                                    const JointGrid& grids, double q1, double q2);

// ---------------------------------------------------------------------------
// Simulated joint law for the Monte Carlo studies: S1 ~ N(mu1, sd1^2) and
// S2 = (Z2 + cubic * S1^3)/norm with (S1, Z2) bivariate normal, normalized
// so E S2 = mu2. cubic = 0 recovers the plain bivariate normal. Quotes are
// computed by exact integration (conditional closed forms + Gauss-Legendre),
// not Monte Carlo.
// ---------------------------------------------------------------------------

struct FxWorldParams {
    double mu1 = 1.0;
    double mu2 = 1.0;
    double sd1 = 0.10;
    double sd2 = 0.05;
    double rho = 0.0;
    double cubic = 0.0;
};

class SimulatedFxWorld {
public:
    explicit SimulatedFxWorld(const FxWorldParams& p);

    double call1(double strike) const;          // E (S1 - K)+
    double call2(double strike) const;          // E (S2 - K)+
    double cross_call_usd(double strike) const; // E S2 (S1/S2 - K)+ = E (S1 - K S2)+

    double cdf1(double x) const;
    double cdf2(double x) const;
    double cdf_ratio(double q) const; // P(S1/S2 <= q)
    double quantile1(double p) const;
    double quantile2(double p) const;
    double quantile_ratio(double p) const;

    double mean1() const { return p_.mu1; }
    double mean2() const { return p_.mu2; }
    double true_covariance() const;
    double true_correlation() const;
    double true_tail(double q1, double q2) const; // P(S1<=q1, S2<=q2)

    // Independent check for the numeraire identity: integrate the payoff
    // against the joint density with an explicit kink split, no closed-form
    // call formulas.
    double cross_call_by_quadrature(double strike) const;

    // Market with unit gross rates; spots chosen so CIP forwards equal the
    // simulated means.
    FXMarket make_market(const std::vector<double>& strikes1, const std::vector<double>& strikes2,
                         const std::vector<double>& strikes_cross) const;

private:
    double cond_mean(double s1) const; // E[S2 | S1 = s1]
    double cond_sd() const;
    double integrate_s1(const std::function<double(double)>& f, double lo, double hi) const;

    FxWorldParams p_;
    double norm_ = 1.0; // normalizer making E S2 = mu2
};

} // namespace rnp::fx
