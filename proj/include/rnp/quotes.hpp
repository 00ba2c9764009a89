#pragma once

#include "rnp/basis.hpp"

#include <map>
#include <optional>

namespace rnp {

// Option quotes for one underlying, keyed by strike.
struct AssetQuotes {
    double forward = 0.0;
    std::map<double, double> puts;  // strike -> price
    std::map<double, double> calls; // strike -> price
};

// GBP-style quotes on a cross rate S_num/S_den, together with the spot and
// gross rate needed to convert them into the pricing currency.
struct CrossQuotes {
    double spot_denom = 0.0;      // S_den at t, in pricing-currency units
    double gross_rate_denom = 0.0; // R_f of the denominator currency
    std::map<double, double> calls;
};

struct MarketQuotes {
    double gross_rate = 0.0; // R_f of the pricing currency
    std::map<int, AssetQuotes> assets;
    std::optional<CrossQuotes> cross;

    // Strike lookup with a small relative tolerance, so strikes recomputed
    // through different code paths still match their quotes.
    static const double* find(const std::map<double, double>& m, double strike);

    // Risk-neutral expectation of one basis payoff implied by the quotes:
    // Bond -> 1, Underlying -> F, Put/Call -> R_f * price,
    // CrossCall -> R_f * S_den,t * C_den-ccy(K).
    double expectation(const Payoff& p) const;
};

} // namespace rnp
