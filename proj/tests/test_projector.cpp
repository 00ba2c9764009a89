#include <doctest.h>

#include "rnp/errors.hpp"
#include "rnp/models.hpp"
#include "rnp/projector.hpp"
#include "rnp/random.hpp"

#include <cmath>

using namespace rnp;

namespace {

BasisSet simple_basis(double call_strike = 12.0) {
    StrikeSet s;
    s.forward = call_strike - 0.5;
    s.call_strikes = {call_strike};
    return BasisSet::univariate(s, 0);
}

MarketQuotes bs_quotes(const models::BSParams& p, const StrikeSet& strikes) {
    MarketQuotes q;
    q.gross_rate = p.gross_rate();
    AssetQuotes aq;
    aq.forward = p.forward();
    for (double k : strikes.put_strikes)
        aq.puts[k] = models::bs_price(p, k, models::OptionSide::Put);
    for (double k : strikes.call_strikes)
        aq.calls[k] = models::bs_price(p, k, models::OptionSide::Call);
    q.assets[0] = std::move(aq);
    return q;
}

StrikeSet bs_strikes(const models::BSParams& p, int n, double lo_q = 0.05, double hi_q = 0.95) {
    std::vector<double> ks(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        ks[static_cast<std::size_t>(i)] = models::bs_quantile(
            p, lo_q + (hi_q - lo_q) * static_cast<double>(i) / static_cast<double>(n - 1));
    return StrikeSet::split(ks, p.forward());
}

} // namespace

TEST_CASE("put payoff is replicated exactly by bond/underlying/call (parity)") {
    const BasisSet basis = simple_basis(12.0);
    const StateGrid grid = build_state_grid(8.0, 16.0, 41); // spans the kink
    const DesignMatrix X = eval_design(basis, grid);
    Vec y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = std::max(12.0 - grid.points[i], 0.0);
    const ReplicatingPortfolio p = fit(X, y, Ols{});
    CHECK(p.coefficients(0) == doctest::Approx(12.0).epsilon(1e-10));
    CHECK(p.coefficients(1) == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(p.coefficients(2) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(p.diagnostics.l2_residual < 1e-9);
    CHECK(p.diagnostics.sup_residual < 1e-9);
}

TEST_CASE("squared payoff matches the closed-form normal equations") {
    BasisSet basis;
    basis.elements = {{PayoffKind::Bond},
                      {PayoffKind::Underlying, 0},
                      {PayoffKind::Call, 0, 0, 12.0}};
    const StateGrid grid = build_state_grid(std::vector<double>{10.0, 11.0, 12.0, 13.0});
    const DesignMatrix X = eval_design(basis, grid);
    Vec y(4);
    y << 100.0, 121.0, 144.0, 169.0;
    const ReplicatingPortfolio p = fit(X, y, Ols{});
    const Vec beta_direct =
        (X.values.transpose() * X.values).ldlt().solve(X.values.transpose() * y);
    CHECK((p.coefficients - beta_direct).cwiseAbs().maxCoeff() < 1e-8);
    // Normal equations hold to the contract tolerance.
    const Vec r = X.values.transpose() * (y - X.values * p.coefficients);
    CHECK(r.norm() <= 1e-10 * (X.values.transpose() * y).norm());
}

TEST_CASE("projecting a basis column returns the unit coefficient") {
    StrikeSet s;
    s.forward = 1.0;
    s.put_strikes = {0.8, 0.95};
    s.call_strikes = {1.1, 1.25};
    const BasisSet basis = BasisSet::univariate(s, 0);
    const StateGrid grid = build_state_grid(0.5, 1.5, 501);
    const DesignMatrix X = eval_design(basis, grid);
    const Vec y = X.values.col(3);
    const ReplicatingPortfolio p = fit(X, y, Ols{});
    for (Eigen::Index j = 0; j < p.coefficients.size(); ++j)
        CHECK(p.coefficients(j) == doctest::Approx(j == 3 ? 1.0 : 0.0).epsilon(1e-9));
    CHECK(p.diagnostics.l2_residual < 1e-9);
}

TEST_CASE("rank deficiency names the offending column") {
    BasisSet basis;
    basis.elements = {{PayoffKind::Bond},
                      {PayoffKind::Underlying, 0},
                      {PayoffKind::Call, 0, 0, 12.0},
                      {PayoffKind::Call, 0, 0, 12.5}};
    // A grid that cannot distinguish strikes 12 and 12.5.
    const StateGrid grid = build_state_grid(std::vector<double>{10.0, 11.0, 12.0, 13.0, 14.0});
    const DesignMatrix X = eval_design(basis, grid);
    Vec y = Vec::Ones(5);
    try {
        fit(X, y, Ols{});
        FAIL("expected a singular-system error");
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("Call") != std::string::npos);
    }
}

TEST_CASE("pricing identities") {
    const BasisSet basis = simple_basis(12.0);
    MarketQuotes q;
    q.gross_rate = 1.0;
    AssetQuotes aq;
    aq.forward = 12.0;
    aq.calls[12.0] = 0.5;
    q.assets[0] = aq;

    ReplicatingPortfolio p;
    p.basis = basis;
    p.coefficients = Vec(3);

    SUBCASE("parity portfolio prices the put") {
        p.coefficients << 12.0, -1.0, 1.0;
        CHECK(price(p, q) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("pure bond") {
        p.coefficients << 3.25, 0.0, 0.0;
        CHECK(price(p, q) == doctest::Approx(3.25));
    }
    SUBCASE("pure underlying prices the forward") {
        p.coefficients << 0.0, 1.0, 0.0;
        CHECK(price(p, q) == doctest::Approx(12.0));
    }
    SUBCASE("missing quote lists the strike") {
        p.coefficients << 0.0, 0.0, 1.0;
        q.assets[0].calls.clear();
        try {
            price(p, q);
            FAIL("expected validation error");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("12") != std::string::npos);
        }
    }
}

TEST_CASE("estimate_moment against lognormal closed forms") {
    const models::BSParams p{1.0, 0.05, 0.2, 1.0};
    const StrikeSet ss = bs_strikes(p, 80, 0.01, 0.99);
    const BasisSet basis = BasisSet::univariate(ss, 0);
    const StateGrid grid =
        build_state_grid(models::bs_quantile(p, 0.0005), models::bs_quantile(p, 0.9995), 2001);
    const MarketQuotes q = bs_quotes(p, ss);

    SUBCASE("constant payoff prices to one") {
        const auto est = estimate_moment([](double) { return 1.0; }, basis, grid, q);
        CHECK(est.estimate == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("squared payoff converges to F^2 exp(sigma^2 T)") {
        const auto est = estimate_moment([](double s) { return s * s; }, basis, grid, q);
        const double truth = models::bs_expected_square(p);
        CHECK(std::abs(est.estimate - truth) / truth < 2e-3);
    }
    SUBCASE("log payoff converges to log S0 + (r - sigma^2/2) T") {
        const auto est = estimate_moment([](double s) { return std::log(s); }, basis, grid, q);
        const double truth = models::bs_expected_log(p);
        CHECK(std::abs(est.estimate - truth) < 2e-4);
    }
}

TEST_CASE("prop 7: spanned payoffs are priced exactly, any grid") {
    // A put whose matching call, bond and underlying are in the basis is in
    // the span, so the estimate equals the parity price to solver precision.
    Rng rng(20240811);
    for (int trial = 0; trial < 20; ++trial) {
        models::BSParams p{1.0 + rng.uniform(), 0.01 + 0.05 * rng.uniform(),
                           0.1 + 0.3 * rng.uniform(), 0.25 + rng.uniform()};
        const double k = p.forward() * (1.0 + 0.1 * (rng.uniform() - 0.5));
        StrikeSet ss;
        ss.forward = p.forward();
        ss.call_strikes = {k};
        const BasisSet basis = BasisSet::univariate(ss, 0);
        const StateGrid grid = build_state_grid(0.3 * k, 2.4 * k, 101 + 50 * trial % 300);
        const MarketQuotes q = bs_quotes(p, ss);
        const auto est =
            estimate_moment([k](double s) { return std::max(k - s, 0.0); }, basis, grid, q);
        const double truth = p.gross_rate() * models::bs_price(p, k, models::OptionSide::Put);
        CHECK(std::abs(est.estimate - truth) <= 1e-9 * std::max(1.0, truth));
    }
}

TEST_CASE("redundant span representation leaves fitted values unchanged") {
    // {Bond, U, Call(K)} and {Bond, U, Put(K)} span the same space by parity.
    const StateGrid grid = build_state_grid(8.0, 16.0, 201);
    BasisSet with_call;
    with_call.elements = {{PayoffKind::Bond},
                          {PayoffKind::Underlying, 0},
                          {PayoffKind::Call, 0, 0, 12.0}};
    BasisSet with_put;
    with_put.elements = {{PayoffKind::Bond},
                         {PayoffKind::Underlying, 0},
                         {PayoffKind::Put, 0, 0, 12.0}};
    const DesignMatrix Xc = eval_design(with_call, grid);
    const DesignMatrix Xp = eval_design(with_put, grid);
    Vec y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = std::exp(grid.points[i] / 10.0);
    const Vec fc = Xc.values * fit(Xc, y, Ols{}).coefficients;
    const Vec fp = Xp.values * fit(Xp, y, Ols{}).coefficients;
    CHECK((fc - fp).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("OLS scales linearly in the target") {
    const BasisSet basis = simple_basis(12.0);
    const StateGrid grid = build_state_grid(8.0, 16.0, 101);
    const DesignMatrix X = eval_design(basis, grid);
    Vec y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = grid.points[i] * grid.points[i];
    const Vec b1 = fit(X, y, Ols{}).coefficients;
    const Vec b3 = fit(X, Vec(3.0 * y), Ols{}).coefficients;
    CHECK((3.0 * b1 - b3).cwiseAbs().maxCoeff() < 1e-10 * b3.cwiseAbs().maxCoeff());
}

TEST_CASE("cauchy weights") {
    const StateGrid grid = build_state_grid(0.5, 1.5, 101);
    SUBCASE("mode at the forward, symmetric") {
        const Vec w = cauchy_weights(grid, 1.0, 0.1);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
        Eigen::Index imax;
        w.maxCoeff(&imax);
        CHECK(grid.points[static_cast<std::size_t>(imax)] == doctest::Approx(1.0));
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(w(static_cast<Eigen::Index>(i)) ==
                  doctest::Approx(w(static_cast<Eigen::Index>(grid.size() - 1 - i)))
                      .epsilon(1e-9));
    }
    SUBCASE("flat limit at huge scale") {
        const Vec w = cauchy_weights(grid, 1.0, 1e9 * (1.5 - 0.5));
        const double uniform = 1.0 / static_cast<double>(grid.size());
        CHECK((w.array() - uniform).abs().maxCoeff() < 1e-6 * uniform);
    }
    SUBCASE("scale must be positive") {
        CHECK_THROWS_AS(cauchy_weights(grid, 1.0, 0.0), DomainError);
    }
}

TEST_CASE("WLS solves the stated weighted problem") {
    const BasisSet basis = simple_basis(12.0);
    const StateGrid grid = build_state_grid(8.0, 16.0, 201);
    const DesignMatrix X = eval_design(basis, grid);
    Vec y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = std::sin(grid.points[i]);
    const Vec w = cauchy_weights(grid, 12.0, 1.0);
    const Vec beta = fit(X, y, Wls{w}).coefficients;
    // Weighted normal equations: X' W (y - X beta) = 0.
    const Vec r = X.values.transpose() * (w.asDiagonal() * (y - X.values * beta));
    CHECK(r.norm() <= 1e-10 * (X.values.transpose() * (w.asDiagonal() * y)).norm());
}

TEST_CASE("constrained fit enforces a nonnegative replicating payoff") {
    // Few options and a payoff that dips: unconstrained replication goes
    // negative, the QP does not.
    StrikeSet ss;
    ss.forward = 1.0;
    ss.put_strikes = {0.95};
    ss.call_strikes = {1.3};
    const BasisSet basis = BasisSet::univariate(ss, 0);
    const StateGrid grid = build_state_grid(0.5, 1.6, 301);
    const DesignMatrix X = eval_design(basis, grid);
    Vec y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double s = grid.points[i];
        y(static_cast<Eigen::Index>(i)) = (s - 1.0) * (s - 1.0); // variance-style target
    }
    const Vec beta_free = fit(X, y, Ols{}).coefficients;
    CHECK((X.values * beta_free).minCoeff() < -1e-4);

    const ReplicatingPortfolio qp = fit(X, y, Constrained{true, std::nullopt});
    CHECK((X.values * qp.coefficients).minCoeff() >= -1e-8);
    // The constrained solution cannot beat the free one.
    CHECK(qp.diagnostics.l2_residual >= (y - X.values * beta_free).norm() - 1e-9);

    SUBCASE("weight floor") {
        const double c = 0.05;
        const ReplicatingPortfolio fl = fit(X, y, Constrained{false, c});
        CHECK(fl.coefficients.minCoeff() >= -c - 1e-10);
    }
    SUBCASE("inactive constraints reproduce OLS") {
        // A target already nonnegative within the span: put payoff itself.
        StrikeSet one;
        one.forward = 1.25;
        one.call_strikes = {1.3};
        const BasisSet b2 = BasisSet::univariate(one, 0);
        const DesignMatrix X2 = eval_design(b2, grid);
        Vec y2(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i)
            y2(static_cast<Eigen::Index>(i)) = std::max(1.3 - grid.points[i], 0.0);
        const Vec bq = fit(X2, y2, Constrained{true, std::nullopt}).coefficients;
        const Vec bo = fit(X2, y2, Ols{}).coefficients;
        CHECK((bq - bo).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("continuous fit matches a fine-grid discrete fit") {
    StrikeSet ss;
    ss.forward = 1.0;
    ss.put_strikes = {0.7, 0.9};
    ss.call_strikes = {1.15, 1.35};
    const BasisSet basis = BasisSet::univariate(ss, 0);
    auto g = [](double s) { return s * s * s; };
    const ReplicatingPortfolio cont = fit_l2(basis, 0.5, 1.5, g, {}, 64);
    const StateGrid grid = build_state_grid(0.5, 1.5, 40001);
    const DesignMatrix X = eval_design(basis, grid);
    Vec y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = g(grid.points[i]);
    const Vec disc = fit(X, y, Ols{}).coefficients;
    CHECK((cont.coefficients - disc).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("prop 6: interior hinge coefficients approach h g''(K) at rate h^3") {
    // Uniform strikes with no boundary gap; g in C^4. Deviations shrink by
    // at least 6x per halving of h (8x is the ideal rate).
    const double a = 0.5, b = 1.5;
    auto g = [](double s) { return std::exp(s); };
    double prev_dev = 0.0;
    for (int level = 0; level < 4; ++level) {
        const int segments = 16 << level; // h = (b-a)/segments
        const int n_k = segments - 1;
        std::vector<double> ks(static_cast<std::size_t>(n_k));
        const double h = (b - a) / segments;
        for (int i = 0; i < n_k; ++i) ks[static_cast<std::size_t>(i)] = a + h * (i + 1);
        const StrikeSet ss = StrikeSet::split(ks, 1.0);
        const BasisSet basis = BasisSet::univariate(ss, 0);
        const ReplicatingPortfolio p = fit_l2(basis, a, b, g, {}, 32);
        double dev = 0.0;
        for (std::size_t j = 0; j < basis.size(); ++j) {
            const Payoff& e = basis.elements[j];
            if (e.kind != PayoffKind::Put && e.kind != PayoffKind::Call) continue;
            const int idx = static_cast<int>(std::lround((e.strike - a) / h));
            if (idx <= 1 || idx >= n_k) continue; // interior strikes only
            dev = std::max(dev, std::abs(p.coefficients(static_cast<Eigen::Index>(j)) -
                                         h * std::exp(e.strike)));
        }
        if (level > 0) CHECK(prev_dev / dev >= 6.0);
        prev_dev = dev;
    }
}
