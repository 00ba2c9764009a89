#include "rnp/projector.hpp"
#include "rnp/errors.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>

namespace rnp {

namespace {

double condition_from_qr(const Eigen::ColPivHouseholderQR<Mat>& qr) {
    const auto& R = qr.matrixR();
    const int n = static_cast<int>(std::min(R.rows(), R.cols()));
    double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double d = std::abs(R(i, i));
        dmax = std::max(dmax, d);
        dmin = std::min(dmin, d);
    }
    if (dmin <= 0.0) return std::numeric_limits<double>::infinity();
    const double c = dmax / dmin;
    return c * c; // normal equations square the condition number
}

void throw_rank_deficient(const DesignMatrix& design, const Eigen::ColPivHouseholderQR<Mat>& qr) {
    const auto perm = qr.colsPermutation().indices();
    const int offender = perm(qr.rank()); // first column outside the pivoted rank
    throw NumericalError("design matrix is rank deficient; column " + std::to_string(offender) +
                         " (" + design.basis.elements[offender].describe() +
                         ") is linearly dependent on the others (duplicate or unresolved strike?)");
}

FitDiagnostics grid_diagnostics(const Mat& X, const Vec& y, const Vec& beta, double condition) {
    const Vec r = y - X * beta;
    FitDiagnostics d;
    d.l2_residual = r.norm();
    d.sup_residual = r.cwiseAbs().maxCoeff();
    d.condition = condition;
    return d;
}

Vec solve_ols(const DesignMatrix& design, const Mat& X, const Vec& y, double& condition) {
    Eigen::ColPivHouseholderQR<Mat> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) throw_rank_deficient(design, qr);
    condition = condition_from_qr(qr);
    Vec beta = qr.solve(y);
    // One refinement pass keeps the normal-equation residual under the
    // contract tolerance for poorly scaled hinge bases.
    const Vec xty = X.transpose() * y;
    const double scale = std::max(xty.norm(), 1e-300);
    if ((X.transpose() * (y - X * beta)).norm() > 1e-10 * scale) {
        beta += qr.solve(y - X * beta);
        if ((X.transpose() * (y - X * beta)).norm() > 1e-10 * scale)
            throw NumericalError("normal equations not satisfied to tolerance; "
                                 "design too ill-conditioned");
    }
    return beta;
}

// Primal active-set solver for min 1/2 b'Hb - f'b  s.t.  A b >= lo.
// Feasible start required; H must be positive definite.
struct ActiveSetQp {
    const Mat& H;
    const Vec& f;
    const Mat& A;
    const Vec& lo;

    Vec solve(Vec beta, double kkt_tol) const {
        const int m = static_cast<int>(H.rows());
        const int k = static_cast<int>(A.rows());
        std::vector<int> work; // active rows
        const int max_iter = 40 * (m + 2);
        for (int iter = 0; iter < max_iter; ++iter) {
            const Vec grad = H * beta - f;
            // Equality-constrained step via the nullspace of the working set.
            Mat Z;
            Mat Awt; // m x |W|
            if (work.empty()) {
                Z = Mat::Identity(m, m);
            } else {
                Awt.resize(m, static_cast<int>(work.size()));
                for (std::size_t c = 0; c < work.size(); ++c) Awt.col(c) = A.row(work[c]).transpose();
                Eigen::HouseholderQR<Mat> qr(Awt);
                Mat Q = qr.householderQ();
                const int nw = static_cast<int>(work.size());
                if (nw >= m)
                    Z = Mat::Zero(m, 0);
                else
                    Z = Q.rightCols(m - nw);
            }
            Vec p = Vec::Zero(m);
            if (Z.cols() > 0) {
                const Mat Hr = Z.transpose() * H * Z;
                const Vec gr = Z.transpose() * grad;
                Eigen::LLT<Mat> llt(Hr);
                if (llt.info() != Eigen::Success)
                    throw NumericalError("constrained fit: reduced Hessian not positive definite");
                p = -Z * llt.solve(gr);
            }
            const double pscale = std::max(1.0, beta.norm());
            if (p.norm() <= 1e-12 * pscale) {
                // Stationary on the working set; check multipliers.
                if (work.empty()) return beta;
                Vec lambda = Awt.colPivHouseholderQr().solve(grad);
                int drop = -1;
                double most_negative = -kkt_tol * std::max(1.0, grad.norm());
                for (int c = 0; c < lambda.size(); ++c)
                    if (lambda(c) < most_negative) {
                        most_negative = lambda(c);
                        drop = c;
                    }
                if (drop < 0) return beta;
                work.erase(work.begin() + drop);
                continue;
            }
            // Step length limited by the nearest blocking constraint.
            double alpha = 1.0;
            int blocking = -1;
            const Vec Ap = A * p;
            const Vec Ab = A * beta;
            for (int i = 0; i < k; ++i) {
                if (std::find(work.begin(), work.end(), i) != work.end()) continue;
                if (Ap(i) >= -1e-14) continue;
                const double a = (lo(i) - Ab(i)) / Ap(i);
                if (a < alpha) {
                    alpha = std::max(a, 0.0);
                    blocking = i;
                }
            }
            beta += alpha * p;
            if (blocking >= 0) work.push_back(blocking);
        }
        throw NumericalError("constrained fit: active-set iteration limit reached");
    }
};

Vec solve_constrained(const DesignMatrix& design, const Mat& X, const Vec& y,
                      const Constrained& opts, double& condition) {
    const int m = static_cast<int>(X.cols());
    const int n = static_cast<int>(X.rows());
    {
        // Full column rank still required.
        Eigen::ColPivHouseholderQR<Mat> qr(X);
        qr.setThreshold(1e-10);
        if (qr.rank() < m) throw_rank_deficient(design, qr);
        condition = condition_from_qr(qr);
    }
    const Mat H = X.transpose() * X;
    const Vec f = X.transpose() * y;

    int rows = 0;
    if (opts.payoff_nonneg) rows += n;
    if (opts.weight_floor) rows += m;
    if (rows == 0) {
        double c2;
        return solve_ols(design, X, y, c2);
    }
    if (opts.weight_floor && *opts.weight_floor <= 0.0)
        throw DomainError("weight floor c must be positive");
    Mat A(rows, m);
    Vec lo(rows);
    if (opts.payoff_nonneg) {
        A.topRows(n) = X;
        lo.head(n).setZero();
    }
    if (opts.weight_floor) {
        A.bottomRows(m) = Mat::Identity(m, m);
        lo.tail(m).setConstant(-*opts.weight_floor);
    }
    // beta = 0 is feasible for both constraint families.
    const double kkt_tol = 1e-8;
    Vec beta = ActiveSetQp{H, f, A, lo}.solve(Vec::Zero(m), kkt_tol);
    if ((A * beta - lo).minCoeff() < -1e-8)
        throw NumericalError("constrained fit: primal feasibility violated");
    return beta;
}

} // namespace

ReplicatingPortfolio fit(const DesignMatrix& design, const Vec& target, const FitMethod& method) {
    const Mat& X = design.values;
    if (target.size() != X.rows())
        throw ValidationError("target length does not match the state grid size");
    double condition = 0.0;
    Vec beta;
    if (std::holds_alternative<Ols>(method)) {
        beta = solve_ols(design, X, target, condition);
    } else if (const Wls* w = std::get_if<Wls>(&method)) {
        if (w->weights.size() != X.rows())
            throw ValidationError("WLS weights length must equal the grid size");
        if (w->weights.minCoeff() < 0.0) throw DomainError("WLS weights must be nonnegative");
        const double wsum = w->weights.sum();
        if (wsum <= 0.0) throw ValidationError("WLS weights must not be all zero");
        const Vec sw = w->weights.cwiseSqrt();
        const Mat Xw = sw.asDiagonal() * X;
        const Vec yw = sw.asDiagonal() * target;
        DesignMatrix scaled{Xw, design.basis, design.grids};
        beta = solve_ols(scaled, Xw, yw, condition);
    } else {
        beta = solve_constrained(design, X, target, std::get<Constrained>(method), condition);
    }
    return ReplicatingPortfolio{design.basis, beta, grid_diagnostics(X, target, beta, condition)};
}

double price(const ReplicatingPortfolio& portfolio, const MarketQuotes& quotes) {
    if (portfolio.coefficients.size() != static_cast<Eigen::Index>(portfolio.basis.size()))
        throw ValidationError("coefficient count does not match basis size");
    // Collect every missing quote before failing, so callers see the full list.
    std::string missing;
    double acc = 0.0;
    for (std::size_t j = 0; j < portfolio.basis.size(); ++j) {
        try {
            acc += portfolio.coefficients(static_cast<Eigen::Index>(j)) *
                   quotes.expectation(portfolio.basis.elements[j]);
        } catch (const ValidationError& e) {
            if (!missing.empty()) missing += "; ";
            missing += e.what();
        }
    }
    if (!missing.empty()) throw ValidationError(missing);
    return acc;
}

MomentEstimate estimate_moment(const std::function<double(double)>& g, const BasisSet& basis,
                               const StateGrid& grid, const MarketQuotes& quotes,
                               const FitMethod& method) {
    DesignMatrix design = eval_design(basis, grid);
    Vec y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        y(static_cast<Eigen::Index>(i)) = g(grid.points[i]);
        if (!std::isfinite(y(static_cast<Eigen::Index>(i))))
            throw DomainError("target payoff is not finite on the grid");
    }
    ReplicatingPortfolio p = fit(design, y, method);
    return MomentEstimate{price(p, quotes), std::move(p)};
}

Vec cauchy_weights(const StateGrid& grid, double forward, double scale) {
    if (scale <= 0.0) throw DomainError("Cauchy scale must be positive");
    Vec w(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double z = (grid.points[i] - forward) / scale;
        w(static_cast<Eigen::Index>(i)) = 1.0 / (1.0 + z * z);
    }
    w /= w.sum();
    return w;
}

// ---------------------------------------------------------------------------
// Continuous-state fit
// ---------------------------------------------------------------------------

namespace {

// Thomas solve for a symmetric positive definite tridiagonal system.
Vec solve_tridiag(std::vector<double> diag, std::vector<double> off, Vec rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double w = off[i - 1] / diag[i - 1];
        diag[i] -= w * off[i - 1];
        rhs(static_cast<Eigen::Index>(i)) -= w * rhs(static_cast<Eigen::Index>(i - 1));
    }
    Vec x(n);
    x(static_cast<Eigen::Index>(n - 1)) =
        rhs(static_cast<Eigen::Index>(n - 1)) / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        x(static_cast<Eigen::Index>(i)) =
            (rhs(static_cast<Eigen::Index>(i)) - off[i] * x(static_cast<Eigen::Index>(i + 1))) /
            diag[i];
    return x;
}

double simpson_inner(const std::function<double(double)>& f, const std::function<double(double)>& g,
                     double lo, double hi, int sub) {
    const double h = (hi - lo) / sub;
    double acc = 0.0;
    for (int q = 0; q < sub; ++q) {
        const double u = lo + q * h;
        const double v = u + h;
        const double m = 0.5 * (u + v);
        acc += h / 6.0 * (f(u) * g(u) + 4.0 * f(m) * g(m) + f(v) * g(v));
    }
    return acc;
}

} // namespace

ReplicatingPortfolio fit_l2(const BasisSet& basis, double a_min, double a_max,
                            const std::function<double(double)>& g,
                            std::span<const double> extra_breaks, int sub) {
    basis.validate();
    if (!spans_piecewise_linear(basis)) {
        // Small degenerate bases (e.g. bond only): direct Gram solve.
        const Mat G = gram_analytic(basis, a_min, a_max);
        const Vec b = target_inner_products(basis, a_min, a_max, g, extra_breaks, sub);
        Eigen::LDLT<Mat> ldlt(G);
        Vec beta = ldlt.solve(b);
        beta += ldlt.solve(b - G * beta);
        FitDiagnostics d;
        const double gg = simpson_inner(g, g, a_min, a_max, sub * 8);
        d.l2_residual = std::sqrt(std::max(0.0, gg - beta.dot(b)));
        d.sup_residual = 0.0;
        d.condition = 0.0;
        return ReplicatingPortfolio{basis, std::move(beta), d};
    }

    for (const auto& e : basis.elements)
        if ((e.kind == PayoffKind::Put || e.kind == PayoffKind::Call) &&
            (e.strike <= a_min || e.strike >= a_max))
            throw DomainError("strike outside (a_min, a_max) in continuous fit");

    // Stable path: solve in the nodal hat basis on {a_min, strikes, a_max},
    // whose Gram is tridiagonal, then convert to option-basis coefficients.
    std::vector<double> nodes = basis_breakpoints(basis, a_min, a_max);
    const std::size_t n = nodes.size();
    std::vector<double> diag(n, 0.0), off(n - 1, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = nodes[i + 1] - nodes[i];
        diag[i] += h / 3.0;
        diag[i + 1] += h / 3.0;
        off[i] = h / 6.0;
    }
    // RHS: <hat_i, g> with per-segment Simpson; break at caller kinks too.
    Vec rhs = Vec::Zero(n);
    double gg = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double lo = nodes[i], hi = nodes[i + 1];
        std::vector<double> cuts{lo, hi};
        for (double x : extra_breaks)
            if (x > lo && x < hi) cuts.push_back(x);
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t c = 1; c < cuts.size(); ++c) {
            auto left = [&](double x) { return (hi - x) / (hi - lo); };
            auto right = [&](double x) { return (x - lo) / (hi - lo); };
            rhs(static_cast<Eigen::Index>(i)) += simpson_inner(g, left, cuts[c - 1], cuts[c], sub);
            rhs(static_cast<Eigen::Index>(i + 1)) +=
                simpson_inner(g, right, cuts[c - 1], cuts[c], sub);
            gg += simpson_inner(g, g, cuts[c - 1], cuts[c], sub);
        }
    }
    const Vec alpha = solve_tridiag(diag, off, rhs);
    Vec beta = polyline_coefficients(nodes, alpha, basis);

    FitDiagnostics d;
    d.l2_residual = std::sqrt(std::max(0.0, gg - alpha.dot(rhs)));
    double sup = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double mid = 0.5 * (nodes[i] + nodes[i + 1]);
        const double fit_mid =
            0.5 * (alpha(static_cast<Eigen::Index>(i)) + alpha(static_cast<Eigen::Index>(i + 1)));
        sup = std::max(sup, std::abs(g(mid) - fit_mid));
        sup = std::max(sup, std::abs(g(nodes[i]) - alpha(static_cast<Eigen::Index>(i))));
    }
    d.sup_residual = sup;
    d.condition = 0.0;
    return ReplicatingPortfolio{basis, std::move(beta), d};
}

} // namespace rnp
