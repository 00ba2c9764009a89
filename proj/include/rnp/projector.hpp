#pragma once

#include "rnp/basis.hpp"
#include "rnp/quotes.hpp"

#include <functional>
#include <optional>
#include <variant>

namespace rnp {

struct FitDiagnostics {
    double l2_residual = 0.0;  // ||Y - X beta|| on the grid
    double sup_residual = 0.0; // max |Y - X beta| on the grid
    double condition = 0.0;    // condition estimate of the normal equations
};

// Fitted replicating portfolio; coefficients are aligned to BasisSet order.
struct ReplicatingPortfolio {
    BasisSet basis;
    Vec coefficients;
    FitDiagnostics diagnostics;
};

struct Ols {};
struct Wls {
    Vec weights; // nonnegative, length = grid size, not all zero
};
struct Constrained {
    bool payoff_nonneg = true;             // X beta >= 0 componentwise
    std::optional<double> weight_floor{};  // beta >= -c componentwise
};
using FitMethod = std::variant<Ols, Wls, Constrained>;

ReplicatingPortfolio fit(const DesignMatrix& design, const Vec& target, const FitMethod& method);

// Projection estimator: beta_1 + beta_2 F + R_f (sum beta_P P(K) + sum beta_C C(K)).
double price(const ReplicatingPortfolio& portfolio, const MarketQuotes& quotes);

struct MomentEstimate {
    double estimate = 0.0;
    ReplicatingPortfolio portfolio;
};

MomentEstimate estimate_moment(const std::function<double(double)>& g, const BasisSet& basis,
                               const StateGrid& grid, const MarketQuotes& quotes,
                               const FitMethod& method = Ols{});

// State weights proportional to a Cauchy density centered at the forward,
// normalized to sum to one.
Vec cauchy_weights(const StateGrid& grid, double forward, double scale);

// Continuous-state fit over [a_min, a_max]: analytic Gram, right-hand side
// <phi_j, g> by piecewise Simpson. Used by property tests and the
// distribution estimator.
ReplicatingPortfolio fit_l2(const BasisSet& basis, double a_min, double a_max,
                            const std::function<double(double)>& g,
                            std::span<const double> extra_breaks = {},
                            int subdivisions_per_segment = 64);

} // namespace rnp
