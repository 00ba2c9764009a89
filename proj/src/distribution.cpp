#include "rnp/distribution.hpp"
#include "rnp/errors.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>

namespace rnp {

namespace {

// Density evaluation for a polyline (nodes, values).
double polyline_at(const std::vector<double>& nodes, const std::vector<double>& vals, double x) {
    const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
    std::size_t hi = static_cast<std::size_t>(it - nodes.begin());
    if (hi == 0) hi = 1;
    if (hi >= nodes.size()) hi = nodes.size() - 1;
    const std::size_t lo = hi - 1;
    const double t = (x - nodes[lo]) / (nodes[hi] - nodes[lo]);
    return vals[lo] + t * (vals[hi] - vals[lo]);
}

// Exact integral of the polyline from nodes.front() to x.
double polyline_integral(const std::vector<double>& nodes, const std::vector<double>& vals,
                         double x) {
    double acc = 0.0;
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        const double lo = nodes[i - 1], hi = nodes[i];
        if (x <= lo) break;
        const double to = std::min(x, hi);
        const double v_to = vals[i - 1] + (to - lo) / (hi - lo) * (vals[i] - vals[i - 1]);
        acc += 0.5 * (vals[i - 1] + v_to) * (to - lo);
        if (x <= hi) break;
    }
    return acc;
}

} // namespace

RNDistribution estimate_cdf(const BasisSet& basis, double a_min, double a_max,
                            const MarketQuotes& quotes, const std::vector<double>& eval_points) {
    basis.validate();
    for (double x : eval_points)
        if (x < a_min || x > a_max)
            throw DomainError("evaluation point outside [a_min, a_max]");

    const std::size_t m = basis.size();
    Vec p(m);
    for (std::size_t j = 0; j < m; ++j)
        p(static_cast<Eigen::Index>(j)) = quotes.expectation(basis.elements[j]);

    // Density coefficients c solve G c = p; then cdf(x) = <1_{<=x}, c' phi> and
    // pdf(x) = c' phi(x). Solved in the nodal hat basis when available, where
    // the Gram is tridiagonal.
    std::vector<double> nodes = basis_breakpoints(basis, a_min, a_max);
    std::vector<double> node_pdf(nodes.size());
    if (spans_piecewise_linear(basis)) {
        const std::size_t n = nodes.size();
        std::vector<double> diag(n, 0.0), off(n - 1, 0.0);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double h = nodes[i + 1] - nodes[i];
            diag[i] += h / 3.0;
            diag[i + 1] += h / 3.0;
            off[i] = h / 6.0;
        }
        // Price of each nodal hat function via its option-basis coefficients.
        Vec p_hat(n);
        Vec e = Vec::Zero(n);
        for (std::size_t i = 0; i < n; ++i) {
            e.setZero();
            e(static_cast<Eigen::Index>(i)) = 1.0;
            p_hat(static_cast<Eigen::Index>(i)) = polyline_coefficients(nodes, e, basis).dot(p);
        }
        // Thomas solve.
        std::vector<double> d = diag, o = off;
        Vec rhs = p_hat;
        for (std::size_t i = 1; i < n; ++i) {
            const double w = o[i - 1] / d[i - 1];
            d[i] -= w * o[i - 1];
            rhs(static_cast<Eigen::Index>(i)) -= w * rhs(static_cast<Eigen::Index>(i - 1));
        }
        Vec c(n);
        c(static_cast<Eigen::Index>(n - 1)) = rhs(static_cast<Eigen::Index>(n - 1)) / d[n - 1];
        for (std::size_t i = n - 1; i-- > 0;)
            c(static_cast<Eigen::Index>(i)) =
                (rhs(static_cast<Eigen::Index>(i)) - o[i] * c(static_cast<Eigen::Index>(i + 1))) /
                d[i];
        for (std::size_t i = 0; i < n; ++i) node_pdf[i] = c(static_cast<Eigen::Index>(i));
    } else {
        const Mat G = gram_analytic(basis, a_min, a_max);
        Eigen::LDLT<Mat> ldlt(G);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("Gram factorization failed (duplicate strikes?)");
        Vec c = ldlt.solve(p);
        c += ldlt.solve(p - G * c);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                v += c(static_cast<Eigen::Index>(j)) * eval_payoff1(basis.elements[j], nodes[i]);
            node_pdf[i] = v;
        }
    }

    RNDistribution out;
    out.eval_points = eval_points;
    out.a_min = a_min;
    out.a_max = a_max;
    out.nodes = std::move(nodes);
    out.node_pdf = std::move(node_pdf);
    out.cdf.resize(eval_points.size());
    out.pdf.resize(eval_points.size());
    for (std::size_t i = 0; i < eval_points.size(); ++i) {
        out.cdf[i] = polyline_integral(out.nodes, out.node_pdf, eval_points[i]);
        out.pdf[i] = polyline_at(out.nodes, out.node_pdf, eval_points[i]);
    }
    return out;
}

RNDistribution estimate_cdf(const BasisSet& basis, double a_min, double a_max,
                            const MarketQuotes& quotes, std::size_t n_eval) {
    if (n_eval < 2) throw DomainError("need at least 2 evaluation points");
    std::vector<double> xs(n_eval);
    const double h = (a_max - a_min) / static_cast<double>(n_eval - 1);
    for (std::size_t i = 0; i < n_eval; ++i) xs[i] = a_min + h * static_cast<double>(i);
    xs.back() = a_max;
    return estimate_cdf(basis, a_min, a_max, quotes, xs);
}

RNDistribution rearrange_monotone(const RNDistribution& dist) {
    const std::size_t n = dist.eval_points.size();
    if (n < 2) throw ValidationError("rearrangement needs at least 2 evaluation points");
    const double step = dist.eval_points[1] - dist.eval_points[0];
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs((dist.eval_points[i] - dist.eval_points[i - 1]) - step) > 1e-9 * step)
            throw ValidationError("rearrangement requires a regular evaluation grid");

    RNDistribution out;
    out.eval_points = dist.eval_points;
    out.cdf = dist.cdf;
    std::sort(out.cdf.begin(), out.cdf.end());
    for (double& v : out.cdf) v = std::min(1.0, std::max(0.0, v));
    out.pdf.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0)
            out.pdf[i] = (out.cdf[1] - out.cdf[0]) / step;
        else if (i + 1 == n)
            out.pdf[i] = (out.cdf[n - 1] - out.cdf[n - 2]) / step;
        else
            out.pdf[i] = (out.cdf[i + 1] - out.cdf[i - 1]) / (2.0 * step);
    }
    out.monotonized = true;
    out.a_min = dist.a_min;
    out.a_max = dist.a_max;
    return out;
}

double moment_from_distribution(const std::function<double(double)>& g, const RNDistribution& dist,
                                std::span<const double> extra_breaks, int sub) {
    if (dist.monotonized)
        throw ValidationError("moment consistency holds for the raw (non-rearranged) estimate");
    if (dist.nodes.empty()) throw ValidationError("distribution lacks its density representation");
    std::vector<double> brk = dist.nodes;
    for (double x : extra_breaks)
        if (x > dist.a_min && x < dist.a_max) brk.push_back(x);
    std::sort(brk.begin(), brk.end());
    brk.erase(std::unique(brk.begin(), brk.end()), brk.end());
    const int k = std::max(1, sub);
    double acc = 0.0;
    for (std::size_t i = 1; i < brk.size(); ++i) {
        const double h = (brk[i] - brk[i - 1]) / k;
        for (int q = 0; q < k; ++q) {
            const double u = brk[i - 1] + q * h;
            const double v = u + h;
            const double mid = 0.5 * (u + v);
            auto f = [&](double x) { return g(x) * polyline_at(dist.nodes, dist.node_pdf, x); };
            acc += h / 6.0 * (f(u) + 4.0 * f(mid) + f(v));
        }
    }
    return acc;
}

std::string distribution_to_csv(const RNDistribution& dist) {
    std::string out = "x,cdf,pdf,monotonized\n";
    char buf[96];
    for (std::size_t i = 0; i < dist.eval_points.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%d\n", dist.eval_points[i], dist.cdf[i],
                      dist.pdf[i], dist.monotonized ? 1 : 0);
        out += buf;
    }
    return out;
}

} // namespace rnp
