#include "rnp/quotes.hpp"
#include "rnp/errors.hpp"

#include <cmath>

namespace rnp {

const double* MarketQuotes::find(const std::map<double, double>& m, double strike) {
    auto it = m.lower_bound(strike * (1.0 - 1e-9) - 1e-12);
    if (it != m.end() && std::abs(it->first - strike) <= 1e-9 * std::max(1.0, std::abs(strike)))
        return &it->second;
    return nullptr;
}

double MarketQuotes::expectation(const Payoff& p) const {
    auto asset = [&](int id) -> const AssetQuotes& {
        auto it = assets.find(id);
        if (it == assets.end())
            throw ValidationError("no quotes for asset id " + std::to_string(id));
        return it->second;
    };
    switch (p.kind) {
    case PayoffKind::Bond:
        return 1.0;
    case PayoffKind::Underlying:
        return asset(p.asset).forward;
    case PayoffKind::Put: {
        const double* q = find(asset(p.asset).puts, p.strike);
        if (!q) throw ValidationError("missing put quote: " + p.describe());
        return gross_rate * *q;
    }
    case PayoffKind::Call: {
        const double* q = find(asset(p.asset).calls, p.strike);
        if (!q) throw ValidationError("missing call quote: " + p.describe());
        return gross_rate * *q;
    }
    case PayoffKind::CrossCall: {
        if (!cross) throw ValidationError("no cross-rate quotes: " + p.describe());
        const double* q = find(cross->calls, p.strike);
        if (!q) throw ValidationError("missing cross call quote: " + p.describe());
        return gross_rate * cross->spot_denom * *q;
    }
    }
    return 0.0;
}

} // namespace rnp
