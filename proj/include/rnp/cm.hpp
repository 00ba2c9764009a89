#pragma once

#include "rnp/basis.hpp"
#include "rnp/quotes.hpp"

#include <functional>

namespace rnp {

// Trapezoidal strike increments, one entry per strike, computed side by side:
// interior (K_{j+1} - K_{j-1})/2, endpoints the one-sided gaps. A side with a
// single strike falls back to the nearest gap in the full strike union;
// `fallback_used` flags that convention in output metadata.
struct CmWeights {
    std::vector<double> put_dk;
    std::vector<double> call_dk;
    bool fallback_used = false;
};

CmWeights cm_weights(const StrikeSet& strikes);

struct CMInputs {
    double g_at_forward = 0.0;
    double g_prime_at_forward = 0.0; // carried for payoff plots; price-neutral
    std::function<double(double)> g_double_prime;
    StrikeSet strikes;
    const MarketQuotes* quotes = nullptr;
    int asset = 0;
};

// g(F) + R_f sum_{K<=F} dK g''(K) P(K) + R_f sum_{K>F} dK g''(K) C(K).
double cm_estimate(const CMInputs& in);

// Value of the CM replicating payoff at a terminal state:
// g(F) + g'(F)(s - F) + sum_j dK_j g''(K_j) hinge_j(s).
double cm_replicating_payoff(const CMInputs& in, const CmWeights& w, double s);

} // namespace rnp
