#include <doctest.h>

#include "rnp/cm.hpp"
#include "rnp/errors.hpp"
#include "rnp/models.hpp"

#include <cmath>

using namespace rnp;

TEST_CASE("trapezoid strike increments") {
    SUBCASE("uniform strikes") {
        StrikeSet s;
        s.forward = 101.0;
        s.put_strikes = {90.0, 95.0, 100.0};
        const CmWeights w = cm_weights(s);
        REQUIRE(w.put_dk.size() == 3);
        CHECK(w.put_dk[0] == doctest::Approx(5.0));
        CHECK(w.put_dk[1] == doctest::Approx(5.0));
        CHECK(w.put_dk[2] == doctest::Approx(5.0));
        CHECK(!w.fallback_used);
    }
    SUBCASE("irregular strikes") {
        StrikeSet s;
        s.forward = 106.0;
        s.put_strikes = {90.0, 100.0, 105.0};
        const CmWeights w = cm_weights(s);
        CHECK(w.put_dk[0] == doctest::Approx(10.0));
        CHECK(w.put_dk[1] == doctest::Approx(7.5));
        CHECK(w.put_dk[2] == doctest::Approx(5.0));
    }
    SUBCASE("single strike on a side uses the nearest union gap") {
        StrikeSet s;
        s.forward = 100.0;
        s.put_strikes = {100.0};
        s.call_strikes = {105.0, 110.0};
        const CmWeights w = cm_weights(s);
        REQUIRE(w.put_dk.size() == 1);
        CHECK(w.put_dk[0] == doctest::Approx(5.0));
        CHECK(w.fallback_used);
    }
}

namespace {

MarketQuotes quotes_for(const models::BSParams& p, const StrikeSet& s) {
    MarketQuotes q;
    q.gross_rate = p.gross_rate();
    AssetQuotes aq;
    aq.forward = p.forward();
    for (double k : s.put_strikes) aq.puts[k] = models::bs_price(p, k, models::OptionSide::Put);
    for (double k : s.call_strikes) aq.calls[k] = models::bs_price(p, k, models::OptionSide::Call);
    q.assets[0] = std::move(aq);
    return q;
}

StrikeSet uniform_strikes(const models::BSParams& p, int n, double lo_q, double hi_q) {
    std::vector<double> ks(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        ks[static_cast<std::size_t>(i)] = models::bs_quantile(
            p, lo_q + (hi_q - lo_q) * static_cast<double>(i) / static_cast<double>(n - 1));
    return StrikeSet::split(ks, p.forward());
}

} // namespace

TEST_CASE("CM is exact for affine payoffs") {
    const models::BSParams p{1.0, 0.05, 0.2, 1.0};
    const StrikeSet s = uniform_strikes(p, 17, 0.05, 0.95);
    const MarketQuotes q = quotes_for(p, s);
    CMInputs in;
    in.strikes = s;
    in.quotes = &q;
    in.g_at_forward = 3.0 * p.forward() - 2.0; // g(S) = 3S - 2
    in.g_prime_at_forward = 3.0;
    in.g_double_prime = [](double) { return 0.0; };
    const double truth = 3.0 * p.forward() - 2.0;
    CHECK(std::abs(cm_estimate(in) - truth) <= 1e-12 * std::abs(truth));
}

TEST_CASE("CM squared payoff puts weight 2 dK on each option") {
    const models::BSParams p{1.0, 0.05, 0.2, 1.0};
    const StrikeSet s = uniform_strikes(p, 9, 0.10, 0.90);
    const MarketQuotes q = quotes_for(p, s);
    CMInputs in;
    in.strikes = s;
    in.quotes = &q;
    in.g_at_forward = p.forward() * p.forward();
    in.g_prime_at_forward = 2.0 * p.forward();
    in.g_double_prime = [](double) { return 2.0; };
    const CmWeights w = cm_weights(s);
    double manual = p.forward() * p.forward();
    for (std::size_t j = 0; j < s.put_strikes.size(); ++j)
        manual += q.gross_rate * 2.0 * w.put_dk[j] * q.assets.at(0).puts.at(s.put_strikes[j]);
    for (std::size_t j = 0; j < s.call_strikes.size(); ++j)
        manual += q.gross_rate * 2.0 * w.call_dk[j] * q.assets.at(0).calls.at(s.call_strikes[j]);
    CHECK(cm_estimate(in) == doctest::Approx(manual).epsilon(1e-14));
}

TEST_CASE("CM log contract approaches the lognormal entropy closed form") {
    const models::BSParams p{1.0, 0.05, 0.2, 1.0};
    const StrikeSet s = uniform_strikes(p, 400, 0.0005, 0.9995);
    const MarketQuotes q = quotes_for(p, s);
    CMInputs in;
    in.strikes = s;
    in.quotes = &q;
    in.g_at_forward = std::log(p.forward());
    in.g_prime_at_forward = 1.0 / p.forward();
    in.g_double_prime = [](double k) { return -1.0 / (k * k); };
    const double est = cm_estimate(in);
    const double truth = models::bs_expected_log(p); // log S0 + (r - sigma^2/2) T
    CHECK(std::abs(est - truth) < 5e-4);
}

TEST_CASE("missing quote raises a validation error") {
    const models::BSParams p{1.0, 0.05, 0.2, 1.0};
    const StrikeSet s = uniform_strikes(p, 9, 0.10, 0.90);
    MarketQuotes q = quotes_for(p, s);
    q.assets[0].calls.erase(q.assets[0].calls.begin());
    CMInputs in;
    in.strikes = s;
    in.quotes = &q;
    in.g_at_forward = 1.0;
    in.g_double_prime = [](double) { return 2.0; };
    CHECK_THROWS_AS(cm_estimate(in), ValidationError);
}

TEST_CASE("replicating payoff evaluation matches the weight layout") {
    StrikeSet s;
    s.forward = 1.0;
    s.put_strikes = {0.9};
    s.call_strikes = {1.1};
    const CmWeights w = cm_weights(s);
    CMInputs in;
    in.strikes = s;
    in.g_at_forward = 1.0;
    in.g_prime_at_forward = 2.0;
    in.g_double_prime = [](double) { return 2.0; };
    // At s = 0.8: g(F) + g'(F)(s-F) + dK*2*(0.9-0.8)+.
    const double expect = 1.0 + 2.0 * (0.8 - 1.0) + w.put_dk[0] * 2.0 * 0.1;
    CHECK(cm_replicating_payoff(in, w, 0.8) == doctest::Approx(expect).epsilon(1e-14));
}
