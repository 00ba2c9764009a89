#include <doctest.h>

#include "rnp/errors.hpp"
#include "rnp/fx.hpp"
#include "rnp/random.hpp"

#include <cmath>

using namespace rnp;
using namespace rnp::fx;

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1.0);
    return v;
}

struct Setup {
    SimulatedFxWorld world;
    FXMarket market;
    BasisSet basis;
    JointGrid grids;
    std::vector<double> k1, k2, k3;

    explicit Setup(double rho, double cubic = 0.0, int n_strikes = 5, std::size_t grid_n = 201)
        : world(FxWorldParams{1.0, 1.0, 0.10, 0.05, rho, cubic}),
          market{},
          basis{},
          grids{StateGrid{}, StateGrid{}} {
        k1 = linspace(world.quantile1(0.05), world.quantile1(0.95), n_strikes);
        k2 = linspace(world.quantile2(0.05), world.quantile2(0.95), n_strikes);
        k3 = linspace(world.quantile_ratio(0.05), world.quantile_ratio(0.95), n_strikes);
        market = world.make_market(k1, k2, k3);
        basis = build_fx_basis(k1, k2, k3);
        grids = JointGrid{
            build_state_grid(world.quantile1(0.02), world.quantile1(0.98), grid_n),
            build_state_grid(world.quantile2(0.02), world.quantile2(0.98), grid_n)};
    }
};

} // namespace

TEST_CASE("simulated world closed forms for the plain normal case") {
    const SimulatedFxWorld w(FxWorldParams{1.0, 1.0, 0.1, 0.05, 0.6, 0.0});
    SUBCASE("call on leg 1 matches the normal call formula") {
        const double k = 1.05;
        const double d = (1.0 - k) / 0.1;
        const double expect = (1.0 - k) * norm_cdf(d) + 0.1 * norm_pdf(d);
        CHECK(w.call1(k) == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("call on leg 2 via conditional integration matches closed form") {
        const double k = 0.97;
        const double d = (1.0 - k) / 0.05;
        const double expect = (1.0 - k) * norm_cdf(d) + 0.05 * norm_pdf(d);
        CHECK(w.call2(k) == doctest::Approx(expect).epsilon(1e-9));
    }
    SUBCASE("cross call equals the closed form on S1 - K S2") {
        const double k = 1.01;
        const double m = 1.0 - k;
        const double s = std::sqrt(0.1 * 0.1 - 2.0 * k * 0.6 * 0.1 * 0.05 + k * k * 0.05 * 0.05);
        const double d = m / s;
        const double expect = m * norm_cdf(d) + s * norm_pdf(d);
        CHECK(w.cross_call_usd(k) == doctest::Approx(expect).epsilon(1e-9));
    }
    SUBCASE("true correlation is rho") {
        CHECK(w.true_correlation() == doctest::Approx(0.6).epsilon(1e-9));
    }
    SUBCASE("quantiles invert the marginal CDFs") {
        CHECK(w.cdf2(w.quantile2(0.25)) == doctest::Approx(0.25).epsilon(1e-9));
        CHECK(w.cdf_ratio(w.quantile_ratio(0.9)) == doctest::Approx(0.9).epsilon(1e-9));
    }
}

TEST_CASE("nonlinear world moments match hand-computed Gaussian algebra") {
    // S2 = (Z2 + c S1^3)/norm with independent legs (rho = 0).
    const double c = 0.1;
    const SimulatedFxWorld w(FxWorldParams{1.0, 1.0, 0.1, 0.05, 0.0, c});
    const double mu = 1.0, s1 = 0.1;
    const double es3 = mu * mu * mu + 3.0 * mu * s1 * s1;        // E S1^3
    const double norm = 1.0 + c * es3;
    // Cov(S1, S1^3) = 3 mu^2 s1^2 + 3 s1^4.
    const double cov13 = 3.0 * mu * mu * s1 * s1 + 3.0 * s1 * s1 * s1 * s1;
    const double expect_cov = c * cov13 / norm;
    CHECK(w.true_covariance() == doctest::Approx(expect_cov).epsilon(1e-8));
}

TEST_CASE("fx basis layout and validation") {
    const BasisSet b = build_fx_basis({0.9, 1.0, 1.1, 1.2, 1.3}, {0.9, 0.95, 1.0, 1.05, 1.1},
                                      {0.9, 0.95, 1.0, 1.05, 1.1});
    CHECK(b.size() == 18); // 1 + 1 + 5 + 1 + 5 + 5
    CHECK(b.elements[0].kind == PayoffKind::Bond);
    CHECK(b.elements[1].kind == PayoffKind::Underlying);
    CHECK(b.elements[7].kind == PayoffKind::Underlying);
    CHECK(b.elements[13].kind == PayoffKind::CrossCall);
    CHECK_THROWS_AS(build_fx_basis({1.0, 1.0}, {0.9}, {}), ValidationError);
}

TEST_CASE("basis expectation pricing follows the numeraire-change identities") {
    Setup s(0.3);
    const Vec p = price_fx_basis_expectations(s.market, s.basis);
    CHECK(p(0) == doctest::Approx(1.0));
    CHECK(p(1) == doctest::Approx(s.market.forward1()));
    // CrossCall priced as R_f S2_t C_gbp(K).
    const double k = s.k3[2];
    const double quote = s.market.cross_calls.at(k);
    bool found = false;
    for (std::size_t j = 0; j < s.basis.size(); ++j)
        if (s.basis.elements[j].kind == PayoffKind::CrossCall &&
            s.basis.elements[j].strike == k) {
            CHECK(p(static_cast<Eigen::Index>(j)) ==
                  doctest::Approx(s.market.gross_usd * s.market.spot2 * quote).epsilon(1e-12));
            found = true;
        }
    CHECK(found);
    // Hand-checked arithmetic: C_gbp = 0.02, S2 = 1.25, R_f = 1.01.
    FXMarket tiny;
    tiny.spot1 = 1.1;
    tiny.spot2 = 1.25;
    tiny.gross_usd = 1.01;
    tiny.gross_gbp = 1.01;
    tiny.gross_eur = 1.01;
    tiny.calls1[1.0] = 0.1;
    tiny.calls2[1.0] = 0.25;
    tiny.cross_calls[0.8] = 0.02;
    const BasisSet one = build_fx_basis({1.0}, {1.0}, {0.8});
    const Vec pe = price_fx_basis_expectations(tiny, one);
    CHECK(pe(pe.size() - 1) == doctest::Approx(0.02525).epsilon(1e-12));
}

TEST_CASE("numeraire identity: priced cross call equals direct quadrature") {
    Rng rng(90210);
    for (int trial = 0; trial < 5; ++trial) {
        const double rho = rng.uniform(-0.9, 0.9);
        const double cubic = trial % 2 ? 0.1 : 0.0;
        const SimulatedFxWorld w(FxWorldParams{1.0, 1.0, 0.1, 0.05, rho, cubic});
        const double k = w.quantile_ratio(rng.uniform(0.2, 0.8));
        CHECK(std::abs(w.cross_call_usd(k) - w.cross_call_by_quadrature(k)) < 1e-5);
    }
}

TEST_CASE("fx covariance recovers the correlation") {
    for (double rho : {-0.8, -0.3, 0.0, 0.4, 0.9}) {
        Setup s(rho);
        const FxDependence dep = fx_covariance(s.market, s.basis, s.grids);
        CHECK(std::abs(dep.correlation - rho) < 0.02);
        CHECK(dep.var1 > 0.0);
        CHECK(dep.var2 > 0.0);
    }
}

TEST_CASE("without cross strikes the covariance is refused (Prop 9)") {
    Setup s(0.5);
    const BasisSet no_cross = build_fx_basis(s.k1, s.k2, {});
    CHECK_THROWS_AS(fx_covariance(s.market, no_cross, s.grids), ValidationError);
    // The tail projection on the separable basis still runs; the covariance
    // payoff would price to zero correlation by the impossibility result.
}

TEST_CASE("joint tail probability") {
    Setup s(0.5, 0.0, 5, 201);
    SUBCASE("thresholds at the grid corners give the trivial events") {
        const TailEstimate lo = joint_tail_probability(
            s.market, s.basis, s.grids, s.grids.grid1.a_min(), s.grids.grid2.a_min());
        CHECK(lo.probability < 0.01);
        const TailEstimate hi = joint_tail_probability(
            s.market, s.basis, s.grids, s.grids.grid1.a_max(), s.grids.grid2.a_max());
        CHECK(hi.probability > 0.99);
    }
    SUBCASE("matches the true joint tail within a percent") {
        const TailEstimate t = joint_tail_probability(s.market, s.basis, s.grids, 0.95, 0.95);
        CHECK(std::abs(t.probability - s.world.true_tail(0.95, 0.95)) < 0.01);
    }
    SUBCASE("threshold outside the grid is a domain error") {
        CHECK_THROWS_AS(joint_tail_probability(s.market, s.basis, s.grids, 10.0, 0.95),
                        DomainError);
    }
}

TEST_CASE("identification gap: S1*S2 is not in the FX span but prices well") {
    Setup s(0.7, 0.0, 25, 101);
    const DesignMatrix X = eval_design(s.basis, {s.grids.grid1, s.grids.grid2});
    Vec y(X.values.rows());
    Eigen::Index r = 0;
    for (double s1 : s.grids.grid1.points)
        for (double s2 : s.grids.grid2.points) y(r++) = s1 * s2;
    const ReplicatingPortfolio p = fit(X, y, Ols{});
    const double rms = p.diagnostics.l2_residual / std::sqrt(static_cast<double>(X.values.rows()));
    CHECK(rms > 1e-6); // the class cannot represent xy exactly
    // Yet the priced covariance error is small.
    const FxDependence dep = fx_covariance(s.market, s.basis, s.grids);
    CHECK(std::abs(dep.correlation - 0.7) < 0.02);
}

TEST_CASE("estimated correlation stays within the noise band") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const double rho = rng.uniform(-1.0, 1.0);
        Setup s(rho);
        const FxDependence dep = fx_covariance(s.market, s.basis, s.grids);
        CHECK(dep.correlation > -1.05);
        CHECK(dep.correlation < 1.05);
    }
}

TEST_CASE("triangular parity validation") {
    FXMarket m;
    m.spot1 = 1.1;
    m.spot2 = 1.25;
    m.gross_usd = 1.02;
    m.gross_gbp = 1.04;
    m.gross_eur = 1.01;
    m.calls1[1.1] = 0.02;
    m.calls2[1.25] = 0.02;
    CHECK_NOTHROW(m.validate());
    CHECK(m.forward_cross() == doctest::Approx(m.forward1() / m.forward2()).epsilon(1e-12));
    m.spot2 = -1.0;
    CHECK_THROWS_AS(m.validate(), DomainError);
}
