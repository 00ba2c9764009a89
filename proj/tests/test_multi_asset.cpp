#include <doctest.h>

#include "rnp/errors.hpp"
#include "rnp/multi_asset.hpp"
#include "rnp/random.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace rnp;
using namespace rnp::multi;

namespace {

// Brute-force tensor projection oracle: weighted least squares on a
// Gauss-Legendre tensor grid, exact for polynomial integrands.
struct GlOracle {
    std::vector<double> nodes, weights; // on [-1, 1]

    explicit GlOracle(int n) {
        nodes.resize(static_cast<std::size_t>(n));
        weights.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = t;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                const double dp = n * (t * p1 - p0) / (t * t - 1.0);
                const double dt = p1 / dp;
                t -= dt;
                if (std::abs(dt) < 1e-15) break;
            }
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (t * p1 - p0) / (t * t - 1.0);
            nodes[static_cast<std::size_t>(i)] = t;
            weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
    }
};

double eval_term(const PolyTerm& t, const Vec& x, const IndexWeights& w) {
    switch (t.kind) {
    case PolyTerm::Kind::One: return 1.0;
    case PolyTerm::Kind::AssetPower: return std::pow(x(t.id), t.power);
    case PolyTerm::Kind::IndexPower:
        return std::pow(w.weights[static_cast<std::size_t>(t.id)].dot(x), t.power);
    }
    return 0.0;
}

// Exact tensor-grid OLS of x_i x_j on the terms, using GL weights per axis.
Vec brute_force_projection(int i, int j, const BoxDomain& box, const IndexWeights& w,
                           const std::vector<PolyTerm>& terms, int nodes_per_axis) {
    const GlOracle gl(nodes_per_axis);
    const std::size_t d = box.dim();
    const std::size_t m = terms.size();
    std::vector<std::size_t> idx(d, 0);
    Mat G = Mat::Zero(m, m);
    Vec b = Vec::Zero(m);
    Vec x(d), phi(m);
    for (;;) {
        double wgt = 1.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double lo = box.intervals[k][0], hi = box.intervals[k][1];
            x(static_cast<Eigen::Index>(k)) =
                0.5 * (lo + hi) + 0.5 * (hi - lo) * gl.nodes[idx[k]];
            wgt *= 0.5 * gl.weights[idx[k]]; // normalized measure per axis
        }
        for (std::size_t t = 0; t < m; ++t)
            phi(static_cast<Eigen::Index>(t)) = eval_term(terms[t], x, w);
        G.noalias() += wgt * phi * phi.transpose();
        b.noalias() += wgt * phi * (x(i) * x(j));
        std::size_t k = 0;
        for (; k < d; ++k) {
            if (++idx[k] < gl.nodes.size()) break;
            idx[k] = 0;
        }
        if (k == d) break;
    }
    return G.fullPivLu().solve(b);
}

} // namespace

TEST_CASE("equicorrelation formula") {
    MomentInputs m;
    m.var_assets = Vec(2);
    m.m4_assets = Vec(2);
    m.var_indices = Vec(1);
    m.m4_indices = Vec(1);
    const double w1 = 0.6, w2 = 0.4;
    Vec w(2);
    w << w1, w2;
    m.var_assets << 0.04, 0.09;
    m.m4_assets << 3.0 * 0.04 * 0.04, 3.0 * 0.09 * 0.09;
    m.m4_indices << 0.01;

    SUBCASE("zero numerator gives zero correlation") {
        m.var_indices << w1 * w1 * 0.04 + w2 * w2 * 0.09;
        CHECK(equicorrelation(m, w) == doctest::Approx(0.0).epsilon(1e-14));
    }
    SUBCASE("comonotone index variance gives correlation one") {
        const double s1 = 0.2, s2 = 0.3;
        m.var_indices << (w1 * s1 + w2 * s2) * (w1 * s1 + w2 * s2);
        CHECK(equicorrelation(m, w) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("matches direct formula evaluation for factor-model inputs") {
        Rng rng(5150);
        for (int trial = 0; trial < 10; ++trial) {
            const double rho = rng.uniform(-0.3, 0.9);
            const double v1 = 0.02 + 0.1 * rng.uniform();
            const double v2 = 0.02 + 0.1 * rng.uniform();
            m.var_assets << v1, v2;
            const double cov = rho * std::sqrt(v1 * v2);
            m.var_indices << w1 * w1 * v1 + w2 * w2 * v2 + 2.0 * w1 * w2 * cov;
            m.m4_assets << 3.0 * v1 * v1, 3.0 * v2 * v2;
            m.m4_indices << 3.0 * m.var_indices(0) * m.var_indices(0);
            CHECK(equicorrelation(m, w) == doctest::Approx(rho).epsilon(1e-10));
        }
    }
    SUBCASE("degenerate weights rejected") {
        Vec degenerate(2);
        degenerate << 1.0, 0.0;
        m.var_indices << 0.04;
        CHECK_THROWS_AS(equicorrelation(m, degenerate), DomainError);
    }
}

TEST_CASE("odd-monomial coefficients vanish on symmetric boxes") {
    const std::size_t d = 3;
    Vec w(3);
    w << 0.5, 0.3, 0.2;
    IndexWeights idx{{w}};
    BoxDomain box;
    box.intervals = {{-0.3, 0.3}, {-0.25, 0.25}, {-0.4, 0.4}};
    REQUIRE(box.symmetric());

    auto terms = quartic_terms(d, 1);
    // Append odd test monomials x_k^3 and x_k^1.
    for (int k = 0; k < 3; ++k) {
        terms.push_back({PolyTerm::Kind::AssetPower, k, 3});
        terms.push_back({PolyTerm::Kind::AssetPower, k, 1});
    }
    const PolyProjection proj(terms, idx, d);
    const Vec beta = proj.project_pair(0, 1, box);
    for (std::size_t t = quartic_terms(d, 1).size(); t < terms.size(); ++t)
        CHECK(std::abs(beta(static_cast<Eigen::Index>(t))) < 1e-10);
}

TEST_CASE("quartic projection matches the brute-force tensor oracle") {
    SUBCASE("d = 2") {
        Vec w(2);
        w << 0.65, 0.35;
        IndexWeights idx{{w}};
        BoxDomain box;
        box.intervals = {{-0.3, 0.3}, {-0.2, 0.2}};
        const auto terms = quartic_terms(2, 1);
        const PolyProjection proj(terms, idx, 2);
        const Vec fast = proj.project_pair(0, 1, box);
        const Vec brute = brute_force_projection(0, 1, box, idx, terms, 41);
        CHECK((fast - brute).cwiseAbs().maxCoeff() < 1e-6);
    }
    SUBCASE("d = 3, asymmetric box") {
        Vec w(3);
        w << 0.5, 0.3, 0.2;
        IndexWeights idx{{w}};
        BoxDomain box;
        box.intervals = {{-0.35, 0.3}, {-0.2, 0.25}, {-0.3, 0.3}};
        const auto terms = quartic_terms(3, 1);
        const PolyProjection proj(terms, idx, 3);
        for (auto [i, j] : {std::pair<int, int>{0, 1}, {0, 2}, {1, 2}}) {
            const Vec fast = proj.project_pair(i, j, box);
            const Vec brute = brute_force_projection(i, j, box, idx, terms, 41);
            CHECK((fast - brute).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("d=2 identified case recovers the algebraic identity") {
    // x1 x2 = (x_M^2 - w1^2 x1^2 - w2^2 x2^2) / (2 w1 w2) lies in the span.
    const double w1 = 0.7, w2 = 0.3;
    Vec w(2);
    w << w1, w2;
    IndexWeights idx{{w}};
    BoxDomain box;
    box.intervals = {{-0.25, 0.25}, {-0.35, 0.35}};
    const QuarticCoeffs qc = quartic_projection_coeffs(0, 1, box, idx);

    MomentInputs m;
    m.var_assets = Vec(2);
    m.m4_assets = Vec(2);
    m.var_indices = Vec(1);
    m.m4_indices = Vec(1);
    // Bivariate normal moments with rho = 0.4.
    const double v1 = 0.03, v2 = 0.05, rho = 0.4;
    const double cov = rho * std::sqrt(v1 * v2);
    const double vm = w1 * w1 * v1 + w2 * w2 * v2 + 2.0 * w1 * w2 * cov;
    m.var_assets << v1, v2;
    m.m4_assets << 3.0 * v1 * v1, 3.0 * v2 * v2;
    m.var_indices << vm;
    m.m4_indices << 3.0 * vm * vm;
    const double est = covariance_from_moments(qc, m);
    CHECK(std::abs(est - cov) < 1e-6);
}

TEST_CASE("covariance_from_moments layout") {
    QuarticCoeffs qc;
    qc.terms = {{PolyTerm::Kind::One, 0, 0}};
    qc.beta = Vec(1);
    qc.beta << 0.125;
    MomentInputs m;
    m.var_assets = Vec(1);
    m.m4_assets = Vec(1);
    m.var_assets << 0.1;
    m.m4_assets << 0.03;
    m.var_indices = Vec(0);
    m.m4_indices = Vec(0);
    CHECK(covariance_from_moments(qc, m) == doctest::Approx(0.125));
}

TEST_CASE("addition residual") {
    const std::size_t d = 4;
    Vec w(4);
    w << 0.4, 0.3, 0.2, 0.1;
    IndexWeights idx{{w}};
    BoxDomain box;
    box.intervals = {{-0.3, 0.3}, {-0.3, 0.3}, {-0.25, 0.25}, {-0.35, 0.35}};

    // Gaussian factor-model moments (exact, consistent by construction).
    Rng rng(777);
    Mat cov = Mat::Zero(d, d);
    Vec loadings(d);
    for (std::size_t k = 0; k < d; ++k) loadings(static_cast<Eigen::Index>(k)) = rng.uniform(-0.4, 1.0);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
            cov(a, b) = 0.04 * loadings(a) * loadings(b) + (a == b ? 0.01 : 0.0);
    MomentInputs m;
    m.var_assets = cov.diagonal();
    m.m4_assets = 3.0 * cov.diagonal().array().square().matrix();
    const double vm = (w.transpose() * cov * w)(0);
    m.var_indices = Vec(1);
    m.m4_indices = Vec(1);
    m.var_indices << vm;
    m.m4_indices << 3.0 * vm * vm;

    SUBCASE("quartic projection estimates satisfy the identity to 1e-10") {
        Mat cov_est = Mat::Zero(d, d);
        cov_est.diagonal() = m.var_assets;
        for (int a = 0; a < static_cast<int>(d); ++a)
            for (int b = a + 1; b < static_cast<int>(d); ++b) {
                const QuarticCoeffs qc = quartic_projection_coeffs(a, b, box, idx);
                cov_est(a, b) = cov_est(b, a) = covariance_from_moments(qc, m);
            }
        const Vec res = addition_residual(cov_est, m, idx);
        CHECK(std::abs(res(0)) < 1e-10);
    }
    SUBCASE("equicorrelation-implied covariances satisfy the identity") {
        const double rho = equicorrelation(m, w);
        Mat cov_eq = Mat::Zero(d, d);
        cov_eq.diagonal() = m.var_assets;
        for (int a = 0; a < static_cast<int>(d); ++a)
            for (int b = 0; b < static_cast<int>(d); ++b)
                if (a != b)
                    cov_eq(a, b) = rho * std::sqrt(m.var_assets(a) * m.var_assets(b));
        const Vec res = addition_residual(cov_eq, m, idx);
        CHECK(std::abs(res(0)) < 1e-10);
    }
    SUBCASE("perturbing one covariance moves the residual linearly") {
        Mat cov_est = Mat::Zero(d, d);
        cov_est.diagonal() = m.var_assets;
        const double rho = equicorrelation(m, w);
        for (int a = 0; a < static_cast<int>(d); ++a)
            for (int b = 0; b < static_cast<int>(d); ++b)
                if (a != b)
                    cov_est(a, b) = rho * std::sqrt(m.var_assets(a) * m.var_assets(b));
        const double delta = 0.0123;
        cov_est(0, 1) += delta;
        cov_est(1, 0) += delta;
        const Vec res = addition_residual(cov_est, m, idx);
        CHECK(res(0) == doctest::Approx(-2.0 * w(0) * w(1) * delta).epsilon(1e-10));
    }
}

TEST_CASE("two-step nesting: equicorrelation is recovered in the equal-correlation case") {
    // All pairwise correlations equal and exact moments: the quartic
    // projection and the equicorrelation estimator agree within 2%.
    const std::size_t d = 5;
    Vec w(5);
    w << 0.3, 0.25, 0.2, 0.15, 0.1;
    IndexWeights idx{{w}};
    const double rho = 0.45;
    Vec vars(5);
    vars << 0.02, 0.03, 0.045, 0.025, 0.06;
    Mat cov(5, 5);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
            cov(a, b) = (a == b ? 1.0 : rho) * std::sqrt(vars(a) * vars(b));
    MomentInputs m;
    m.var_assets = vars;
    m.m4_assets = 3.0 * vars.array().square().matrix();
    const double vm = (w.transpose() * cov * w)(0);
    m.var_indices = Vec(1);
    m.m4_indices = Vec(1);
    m.var_indices << vm;
    m.m4_indices << 3.0 * vm * vm;

    const double rho_eq = equicorrelation(m, w);
    CHECK(rho_eq == doctest::Approx(rho).epsilon(1e-10));

    const BoxDomain box = BoxDomain::symmetric_from_variances(vars, 3.0);
    for (int a = 0; a < static_cast<int>(d); ++a)
        for (int b = a + 1; b < static_cast<int>(d); ++b) {
            const QuarticCoeffs qc = quartic_projection_coeffs(a, b, box, idx);
            const double c = covariance_from_moments(qc, m);
            const double r = c / std::sqrt(vars(a) * vars(b));
            CHECK(std::abs(r - rho) / rho < 0.02);
        }
}

TEST_CASE("duplicate index weights produce a named singular-Gram error") {
    Vec w(3);
    w << 0.5, 0.3, 0.2;
    IndexWeights idx{{w, w}};
    BoxDomain box;
    box.intervals = {{-0.3, 0.3}, {-0.3, 0.3}, {-0.3, 0.3}};
    try {
        quartic_projection_coeffs(0, 1, box, idx);
        FAIL("expected singular Gram");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    }
}

TEST_CASE("shrinkage to the equicorrelation matrix") {
    SUBCASE("already well-conditioned input is untouched") {
        Mat c(3, 3);
        c << 1.0, 0.2, 0.1, 0.2, 1.0, 0.3, 0.1, 0.3, 1.0;
        const CovEstimate e = shrink_to_equicorrelation(c, 0.2);
        CHECK(e.shrinkage == 0.0);
        CHECK((e.correlation - c).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("equicorrelation input is a fixed point") {
        Mat c = Mat::Constant(4, 4, 0.5);
        c.diagonal().setOnes();
        const CovEstimate e = shrink_to_equicorrelation(c, 0.5);
        CHECK(e.shrinkage == 0.0);
    }
    SUBCASE("indefinite input gets the smallest feasible blend") {
        Mat c(3, 3);
        c << 1.0, 0.99, -0.9, 0.99, 1.0, -0.9, -0.9, -0.9, 1.0;
        Eigen::SelfAdjointEigenSolver<Mat> before(c, Eigen::EigenvaluesOnly);
        REQUIRE(before.eigenvalues().minCoeff() < 0.0);
        const CovEstimate e = shrink_to_equicorrelation(c, 0.1);
        CHECK(e.shrinkage > 0.0);
        Eigen::SelfAdjointEigenSolver<Mat> after(e.correlation, Eigen::EigenvaluesOnly);
        const double lo = after.eigenvalues().minCoeff();
        CHECK(lo >= 1e-3 - 1e-9);
        // Bisection to 1e-6 in alpha: backing off the blend by 2e-6 breaks
        // the floor again.
        Mat equi = Mat::Constant(3, 3, 0.1);
        equi.diagonal().setOnes();
        Mat clipped = c;
        const double a2 = e.shrinkage - 2e-6;
        Mat blend = (1.0 - a2) * clipped + a2 * equi;
        Eigen::SelfAdjointEigenSolver<Mat> less(blend, Eigen::EigenvaluesOnly);
        CHECK(less.eigenvalues().minCoeff() < 1e-3);
    }
    SUBCASE("degenerate target rejected") {
        Mat c = Mat::Identity(3, 3);
        CHECK_THROWS_AS(shrink_to_equicorrelation(c, 0.9999999), DomainError);
        CHECK_THROWS_AS(shrink_to_equicorrelation(c, -0.5), DomainError);
    }
}

TEST_CASE("spanning estimator") {
    SUBCASE("fifty-fifty basket of independent legs") {
        const SpanningEstimate e = spanning_covariance(0.5, 0.5, 1.0, 1.0, 0.5);
        CHECK(e.covariance == doctest::Approx(0.0));
        CHECK(e.bias_sign == +1);
    }
    SUBCASE("zero loading rejected") {
        CHECK_THROWS_AS(spanning_covariance(1.0, 0.0, 1.0, 1.0, 1.0), DomainError);
    }
    SUBCASE("bias direction under idiosyncratic error (Monte Carlo)") {
        // R3 = b1 R1 + b2 R2 + e with independent e: the estimate including
        // Var(e) overshoots when b1 b2 > 0 and undershoots when b1 b2 < 0.
        Rng rng(2024);
        for (const double b2 : {0.45, -0.45}) {
            const double b1 = 1.1;
            const std::size_t n = 100000;
            double s1 = 0, s2 = 0, s3 = 0, s11 = 0, s22 = 0, s33 = 0, s12 = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double z1 = rng.normal();
                const double z2 = 0.6 * z1 + 0.8 * rng.normal();
                const double e = 0.3 * rng.normal();
                const double r3 = b1 * z1 + b2 * z2 + e;
                s1 += z1;
                s2 += z2;
                s3 += r3;
                s11 += z1 * z1;
                s22 += z2 * z2;
                s33 += r3 * r3;
                s12 += z1 * z2;
            }
            const double inv = 1.0 / static_cast<double>(n);
            const double v1 = s11 * inv - s1 * inv * s1 * inv;
            const double v2 = s22 * inv - s2 * inv * s2 * inv;
            const double v3 = s33 * inv - s3 * inv * s3 * inv;
            const double true_cov = s12 * inv - s1 * inv * s2 * inv;
            const SpanningEstimate e = spanning_covariance(b1, b2, v1, v2, v3);
            if (e.bias_sign > 0)
                CHECK(e.covariance >= true_cov - 1e-3);
            else
                CHECK(e.covariance <= true_cov + 1e-3);
        }
    }
}

TEST_CASE("separable two-asset estimate prices to the product of forwards") {
    Rng rng(31415);
    for (int trial = 0; trial < 10; ++trial) {
        const double f1 = 0.5 + 2.0 * rng.uniform();
        const double f2 = 0.5 + 2.0 * rng.uniform();
        StrikeSet s1, s2;
        s1.forward = f1;
        s1.put_strikes = {0.85 * f1, 0.95 * f1};
        s1.call_strikes = {1.05 * f1, 1.2 * f1};
        s2.forward = f2;
        s2.put_strikes = {0.9 * f2};
        s2.call_strikes = {1.1 * f2};
        const StateGrid g1 = build_state_grid(0.5 * f1, 1.5 * f1, 41);
        const StateGrid g2 = build_state_grid(0.6 * f2, 1.4 * f2, 31);
        MarketQuotes q;
        q.gross_rate = 1.0 + rng.uniform() * 0.1;
        AssetQuotes a1, a2;
        a1.forward = f1;
        a2.forward = f2;
        // Arbitrary positive quotes; Prop 9 makes their values irrelevant.
        for (double k : s1.put_strikes) a1.puts[k] = 0.01 + 0.05 * rng.uniform();
        for (double k : s1.call_strikes) a1.calls[k] = 0.01 + 0.05 * rng.uniform();
        for (double k : s2.put_strikes) a2.puts[k] = 0.01 + 0.05 * rng.uniform();
        for (double k : s2.call_strikes) a2.calls[k] = 0.01 + 0.05 * rng.uniform();
        q.assets[0] = a1;
        q.assets[1] = a2;
        const double est = separable_cross_estimate(s1, s2, g1, g2, q);
        CHECK(std::abs(est - f1 * f2) <= 1e-8 * std::max(1.0, f1 * f2));
    }
}

TEST_CASE("prop 10 executable: x_i (w.x) stays unreplicated for d = 3") {
    // Project x_0 * (w.x) on separable hinge classes per coordinate plus a
    // ridge class in w.x on a 41^3 grid; the residual norm stays away from 0.
    const int n = 41;
    Vec w(3);
    w << 0.5, 0.3, 0.2;
    const double lo = -0.3, hi = 0.3;
    std::vector<double> axis(n);
    for (int i = 0; i < n; ++i) axis[i] = lo + (hi - lo) * i / (n - 1.0);

    const int hinges = 12;
    std::vector<double> knots(hinges);
    for (int i = 0; i < hinges; ++i) knots[i] = lo + (hi - lo) * (i + 0.5) / hinges;
    std::vector<double> zknots(hinges);
    for (int i = 0; i < hinges; ++i) zknots[i] = lo + (hi - lo) * (i + 0.5) / hinges;

    const int rows = n * n * n;
    const int cols = 1 + 3 * (1 + hinges) + 1 + hinges;
    Mat X(rows, cols);
    Vec y(rows);
    int r = 0;
    for (int i0 = 0; i0 < n; ++i0)
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2, ++r) {
                const double x0 = axis[i0], x1 = axis[i1], x2 = axis[i2];
                const double z = w(0) * x0 + w(1) * x1 + w(2) * x2;
                int c = 0;
                X(r, c++) = 1.0;
                for (double xv : {x0, x1, x2}) {
                    X(r, c++) = xv;
                    for (double k : knots) X(r, c++) = std::max(xv - k, 0.0);
                }
                X(r, c++) = z;
                for (double k : zknots) X(r, c++) = std::max(z - k, 0.0);
                y(r) = x0 * z;
            }
    const Vec beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    const double rms =
        std::sqrt((y - X * beta).squaredNorm() / static_cast<double>(rows));
    CHECK(rms > 1e-3);
}
