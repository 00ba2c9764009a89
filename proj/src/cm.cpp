#include "rnp/cm.hpp"
#include "rnp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace rnp {

namespace {

std::vector<double> side_weights(const std::vector<double>& ks) {
    const std::size_t n = ks.size();
    std::vector<double> dk(n);
    if (n < 2) return dk; // caller handles the single-strike fallback
    dk.front() = ks[1] - ks[0];
    dk.back() = ks[n - 1] - ks[n - 2];
    for (std::size_t j = 1; j + 1 < n; ++j) dk[j] = 0.5 * (ks[j + 1] - ks[j - 1]);
    return dk;
}

double nearest_union_gap(const StrikeSet& s, double k) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto* side : {&s.put_strikes, &s.call_strikes})
        for (double other : *side)
            if (other != k) best = std::min(best, std::abs(other - k));
    return best;
}

} // namespace

CmWeights cm_weights(const StrikeSet& strikes) {
    strikes.validate();
    CmWeights w;
    w.put_dk = side_weights(strikes.put_strikes);
    w.call_dk = side_weights(strikes.call_strikes);
    auto fix_single = [&](const std::vector<double>& ks, std::vector<double>& dk) {
        if (ks.size() != 1) return;
        const double gap = nearest_union_gap(strikes, ks.front());
        if (!std::isfinite(gap))
            throw ValidationError("cannot assign a trapezoid increment to a lone strike");
        dk.front() = gap;
        w.fallback_used = true;
    };
    fix_single(strikes.put_strikes, w.put_dk);
    fix_single(strikes.call_strikes, w.call_dk);
    return w;
}

double cm_estimate(const CMInputs& in) {
    if (in.strikes.n_k() == 0) throw ValidationError("CM estimate needs at least one strike");
    if (!in.quotes) throw ValidationError("CM estimate needs market quotes");
    const CmWeights w = cm_weights(in.strikes);
    auto it = in.quotes->assets.find(in.asset);
    if (it == in.quotes->assets.end())
        throw ValidationError("no quotes for asset id " + std::to_string(in.asset));
    const AssetQuotes& aq = it->second;

    double acc = in.g_at_forward;
    for (std::size_t j = 0; j < in.strikes.put_strikes.size(); ++j) {
        const double k = in.strikes.put_strikes[j];
        const double gpp = in.g_double_prime(k);
        if (!std::isfinite(gpp)) throw DomainError("g'' not finite at strike");
        const double* q = MarketQuotes::find(aq.puts, k);
        if (!q) throw ValidationError("missing put quote at strike " + std::to_string(k));
        acc += in.quotes->gross_rate * w.put_dk[j] * gpp * *q;
    }
    for (std::size_t j = 0; j < in.strikes.call_strikes.size(); ++j) {
        const double k = in.strikes.call_strikes[j];
        const double gpp = in.g_double_prime(k);
        if (!std::isfinite(gpp)) throw DomainError("g'' not finite at strike");
        const double* q = MarketQuotes::find(aq.calls, k);
        if (!q) throw ValidationError("missing call quote at strike " + std::to_string(k));
        acc += in.quotes->gross_rate * w.call_dk[j] * gpp * *q;
    }
    return acc;
}

double cm_replicating_payoff(const CMInputs& in, const CmWeights& w, double s) {
    const double F = in.strikes.forward;
    double acc = in.g_at_forward + in.g_prime_at_forward * (s - F);
    for (std::size_t j = 0; j < in.strikes.put_strikes.size(); ++j) {
        const double k = in.strikes.put_strikes[j];
        acc += w.put_dk[j] * in.g_double_prime(k) * std::max(k - s, 0.0);
    }
    for (std::size_t j = 0; j < in.strikes.call_strikes.size(); ++j) {
        const double k = in.strikes.call_strikes[j];
        acc += w.call_dk[j] * in.g_double_prime(k) * std::max(s - k, 0.0);
    }
    return acc;
}

} // namespace rnp
