#include <doctest.h>

#include "rnp/distribution.hpp"
#include "rnp/errors.hpp"
#include "rnp/models.hpp"
#include "rnp/random.hpp"

#include <cmath>

using namespace rnp;

namespace {

struct BsWorld {
    models::BSParams p{1.0, 0.05, 0.2, 1.0};
    StrikeSet strikes;
    BasisSet basis;
    MarketQuotes quotes;
    double a_min, a_max;

    explicit BsWorld(int n_k = 24, double lo_q = 0.02, double hi_q = 0.98) {
        std::vector<double> ks(static_cast<std::size_t>(n_k));
        for (int i = 0; i < n_k; ++i)
            ks[static_cast<std::size_t>(i)] = models::bs_quantile(
                p, lo_q + (hi_q - lo_q) * static_cast<double>(i) / static_cast<double>(n_k - 1));
        strikes = StrikeSet::split(ks, p.forward());
        basis = BasisSet::univariate(strikes, 0);
        quotes.gross_rate = p.gross_rate();
        AssetQuotes aq;
        aq.forward = p.forward();
        for (double k : strikes.put_strikes)
            aq.puts[k] = models::bs_price(p, k, models::OptionSide::Put);
        for (double k : strikes.call_strikes)
            aq.calls[k] = models::bs_price(p, k, models::OptionSide::Call);
        quotes.assets[0] = std::move(aq);
        a_min = models::bs_quantile(p, 0.001);
        a_max = models::bs_quantile(p, 0.999);
    }
};

} // namespace

TEST_CASE("CDF boundary values") {
    BsWorld w;
    const RNDistribution d = estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes, 201);
    CHECK(std::abs(d.cdf.front() - 0.0) <= 1e-8);
    CHECK(std::abs(d.cdf.back() - 1.0) <= 1e-8);
}

TEST_CASE("CDF tracks the lognormal over the central region") {
    BsWorld w;
    const RNDistribution d = estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes, 501);
    double max_err = 0.0;
    for (std::size_t i = 0; i < d.eval_points.size(); ++i) {
        const double x = d.eval_points[i];
        const double q = models::bs_cdf(w.p, x);
        if (q < 0.05 || q > 0.95) continue; // central 90% of A
        max_err = std::max(max_err, std::abs(d.cdf[i] - q));
    }
    CHECK(max_err < 5e-3);
}

TEST_CASE("bond-only basis yields the uniform CDF") {
    BasisSet bond;
    bond.elements = {{PayoffKind::Bond}};
    MarketQuotes q;
    q.gross_rate = 1.0;
    q.assets[0] = AssetQuotes{1.0, {}, {}};
    const RNDistribution d = estimate_cdf(bond, 0.5, 1.5, q, 11);
    for (std::size_t i = 0; i < d.eval_points.size(); ++i)
        CHECK(d.cdf[i] == doctest::Approx((d.eval_points[i] - 0.5) / 1.0).epsilon(1e-10));
}

TEST_CASE("evaluation point outside bounds is rejected") {
    BsWorld w;
    CHECK_THROWS_AS(estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes,
                                 std::vector<double>{w.a_min - 0.01}),
                    DomainError);
}

TEST_CASE("pdf is piecewise linear with kinks only at strikes") {
    BsWorld w(12);
    const RNDistribution d = estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes, 801);
    const double step = d.eval_points[1] - d.eval_points[0];
    std::vector<double> strikes = w.strikes.put_strikes;
    strikes.insert(strikes.end(), w.strikes.call_strikes.begin(), w.strikes.call_strikes.end());
    const double scale = *std::max_element(d.pdf.begin(), d.pdf.end());
    for (std::size_t i = 1; i + 1 < d.eval_points.size(); ++i) {
        const double second = d.pdf[i + 1] - 2.0 * d.pdf[i] + d.pdf[i - 1];
        if (std::abs(second) < 1e-8 * scale) continue;
        // A kink: some strike must lie within one evaluation step.
        bool near = false;
        for (double k : strikes)
            if (std::abs(k - d.eval_points[i]) <= step * (1.0 + 1e-9)) near = true;
        CHECK(near);
    }
}

TEST_CASE("moment consistency between projection and distribution routes") {
    BsWorld w(16);
    const RNDistribution d = estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes, 101);
    const StateGrid grid = build_state_grid(w.a_min, w.a_max, 20001);

    SUBCASE("pdf integrates to one") {
        const double total = moment_from_distribution([](double) { return 1.0; }, d);
        CHECK(std::abs(total - 1.0) <= 1e-8);
    }
    SUBCASE("spanned hinge payoffs match the direct estimate to 1e-9") {
        // A put at a call strike is spanned: both routes equal the parity
        // price exactly.
        const double k = w.strikes.call_strikes[1];
        auto g = [k](double s) { return std::max(k - s, 0.0); };
        const double direct = estimate_moment(g, w.basis, grid, w.quotes).estimate;
        const double brk[] = {k};
        const double via_dist = moment_from_distribution(g, d, brk);
        CHECK(std::abs(direct - via_dist) <= 1e-9 * (1.0 + std::abs(direct)));
    }
    SUBCASE("random piecewise-smooth targets within 1e-6 relative") {
        Rng rng(314159);
        for (int trial = 0; trial < 20; ++trial) {
            const double k1 = rng.uniform(w.a_min * 1.05, w.a_max * 0.95);
            const double c2 = rng.uniform(-1.0, 1.0);
            const double c1 = rng.uniform(-1.0, 1.0);
            auto g = [=](double s) {
                return c1 * s + c2 * s * s + std::max(s - k1, 0.0);
            };
            const double direct = estimate_moment(g, w.basis, grid, w.quotes).estimate;
            const double brk[] = {k1};
            const double via_dist = moment_from_distribution(g, d, brk, 16);
            CHECK(std::abs(direct - via_dist) <= 1e-6 * (1.0 + std::abs(direct)));
        }
    }
    SUBCASE("underlying payoff prices back the forward under dense strikes") {
        BsWorld dense(60, 0.005, 0.995);
        const RNDistribution dd =
            estimate_cdf(dense.basis, dense.a_min, dense.a_max, dense.quotes, 101);
        const double est = moment_from_distribution([](double s) { return s; }, dd);
        CHECK(std::abs(est - dense.p.forward()) < 2e-3);
    }
}

TEST_CASE("rearrangement") {
    SUBCASE("sorts, clips and flags") {
        RNDistribution d;
        d.eval_points = {1.0, 2.0, 3.0, 4.0};
        d.cdf = {0.0, 0.6, 0.4, 1.0};
        d.pdf = {0.0, 0.0, 0.0, 0.0};
        const RNDistribution r = rearrange_monotone(d);
        CHECK(r.cdf == std::vector<double>{0.0, 0.4, 0.6, 1.0});
        CHECK(r.monotonized);
        for (std::size_t i = 1; i < r.cdf.size(); ++i) CHECK(r.cdf[i] >= r.cdf[i - 1]);
    }
    SUBCASE("clipping to [0,1]") {
        RNDistribution d;
        d.eval_points = {1.0, 2.0, 3.0};
        d.cdf = {-0.01, 0.5, 1.02};
        d.pdf = {0.0, 0.0, 0.0};
        const RNDistribution r = rearrange_monotone(d);
        CHECK(r.cdf.front() == 0.0);
        CHECK(r.cdf.back() == 1.0);
    }
    SUBCASE("idempotent on monotone input") {
        BsWorld w;
        const RNDistribution d = estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes, 101);
        const RNDistribution r1 = rearrange_monotone(d);
        const RNDistribution r2 = rearrange_monotone(r1);
        for (std::size_t i = 0; i < r1.cdf.size(); ++i) CHECK(r1.cdf[i] == r2.cdf[i]);
    }
    SUBCASE("does not increase sup distance to the lognormal reference") {
        BsWorld w(8, 0.10, 0.90); // sparse strikes: tails misbehave
        const RNDistribution d = estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes, 401);
        const RNDistribution r = rearrange_monotone(d);
        double before = 0.0, after = 0.0;
        for (std::size_t i = 0; i < d.eval_points.size(); ++i) {
            const double truth = models::bs_cdf(w.p, d.eval_points[i]);
            before = std::max(before, std::abs(d.cdf[i] - truth));
            after = std::max(after, std::abs(r.cdf[i] - truth));
        }
        CHECK(after <= before + 1e-12);
    }
    SUBCASE("moment consistency is only defined pre-rearrangement") {
        BsWorld w;
        const RNDistribution d = estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes, 101);
        const RNDistribution r = rearrange_monotone(d);
        CHECK_THROWS_AS(moment_from_distribution([](double) { return 1.0; }, r),
                        ValidationError);
    }
}

TEST_CASE("CSV export carries the monotonized flag") {
    BsWorld w;
    const RNDistribution d = estimate_cdf(w.basis, w.a_min, w.a_max, w.quotes, 21);
    const std::string csv = distribution_to_csv(d);
    CHECK(csv.rfind("x,cdf,pdf,monotonized\n", 0) == 0);
    CHECK(csv.find(",0\n") != std::string::npos);
    const std::string csv2 = distribution_to_csv(rearrange_monotone(d));
    CHECK(csv2.find(",1\n") != std::string::npos);
}
