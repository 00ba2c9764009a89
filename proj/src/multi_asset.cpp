#include "rnp/multi_asset.hpp"
#include "rnp/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

namespace rnp::multi {

namespace {

constexpr int kBitsPerAsset = 4;
constexpr std::uint64_t kExpMask = 0xF;

int exponent_of(std::uint64_t key, std::size_t k) {
    return static_cast<int>((key >> (kBitsPerAsset * k)) & kExpMask);
}

std::uint64_t bump_exponent(std::uint64_t key, std::size_t k, int by) {
    const int e = exponent_of(key, k) + by;
    if (e > 15) throw NumericalError("monomial exponent overflow");
    key &= ~(kExpMask << (kBitsPerAsset * k));
    key |= static_cast<std::uint64_t>(e) << (kBitsPerAsset * k);
    return key;
}

} // namespace

bool BoxDomain::symmetric() const {
    for (const auto& iv : intervals)
        if (std::abs(iv[0] + iv[1]) > 1e-12 * std::max(1.0, std::abs(iv[1]))) return false;
    return true;
}

void BoxDomain::validate() const {
    if (intervals.empty()) throw ValidationError("box domain is empty");
    for (const auto& iv : intervals)
        if (!(iv[0] < iv[1])) throw DomainError("box interval must have lo < hi");
}

BoxDomain BoxDomain::symmetric_from_variances(const Vec& variances, double width_sigmas) {
    BoxDomain box;
    box.intervals.reserve(variances.size());
    for (Eigen::Index k = 0; k < variances.size(); ++k) {
        if (variances(k) <= 0.0) throw DomainError("variance must be positive");
        const double w = width_sigmas * std::sqrt(variances(k));
        box.intervals.push_back({-w, w});
    }
    return box;
}

void IndexWeights::validate(std::size_t d) const {
    for (const auto& w : weights) {
        if (static_cast<std::size_t>(w.size()) != d)
            throw ValidationError("index weight vector has wrong dimension");
        if (std::abs(w.sum() - 1.0) > 1e-12)
            throw ValidationError("index weights must sum to 1");
    }
}

void MomentInputs::validate() const {
    auto check = [](const Vec& var, const Vec& m4, const char* what) {
        if (var.size() != m4.size()) throw ValidationError("moment vector size mismatch");
        for (Eigen::Index k = 0; k < var.size(); ++k) {
            if (var(k) <= 0.0) throw DomainError(std::string(what) + " variance must be positive");
            if (m4(k) < var(k) * var(k) * (1.0 - 1e-9))
                throw ValidationError(std::string(what) +
                                      " fourth moment violates Jensen (m4 < var^2)");
        }
    };
    check(var_assets, m4_assets, "asset");
    check(var_indices, m4_indices, "index");
}

std::vector<PolyTerm> quartic_terms(std::size_t d, std::size_t n_indices) {
    std::vector<PolyTerm> terms;
    terms.push_back({PolyTerm::Kind::One, 0, 0});
    for (std::size_t k = 0; k < d; ++k)
        terms.push_back({PolyTerm::Kind::AssetPower, static_cast<int>(k), 2});
    for (std::size_t k = 0; k < d; ++k)
        terms.push_back({PolyTerm::Kind::AssetPower, static_cast<int>(k), 4});
    for (std::size_t l = 0; l < n_indices; ++l) {
        terms.push_back({PolyTerm::Kind::IndexPower, static_cast<int>(l), 2});
        terms.push_back({PolyTerm::Kind::IndexPower, static_cast<int>(l), 4});
    }
    return terms;
}

// ---------------------------------------------------------------------------
// PolyProjection
// ---------------------------------------------------------------------------

namespace {

using Builder = std::unordered_map<std::uint64_t, double>;

std::vector<std::pair<std::uint64_t, double>> freeze(const Builder& b) {
    std::vector<std::pair<std::uint64_t, double>> out(b.begin(), b.end());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

PolyProjection::Poly PolyProjection::term_poly(const PolyTerm& t) const {
    Poly p;
    switch (t.kind) {
    case PolyTerm::Kind::One:
        p.terms = {{0ULL, 1.0}};
        break;
    case PolyTerm::Kind::AssetPower: {
        std::uint64_t key = 0;
        key = bump_exponent(key, static_cast<std::size_t>(t.id), t.power);
        p.terms = {{key, 1.0}};
        break;
    }
    case PolyTerm::Kind::IndexPower: {
        const Vec& w = idx_.weights.at(static_cast<std::size_t>(t.id));
        // (w.x)^power by repeated multiplication.
        Builder acc{{0ULL, 1.0}};
        for (int rep = 0; rep < t.power; ++rep) {
            Builder next;
            for (const auto& [key, coeff] : acc)
                for (std::size_t k = 0; k < d_; ++k) {
                    if (w(static_cast<Eigen::Index>(k)) == 0.0) continue;
                    next[bump_exponent(key, k, 1)] += coeff * w(static_cast<Eigen::Index>(k));
                }
            acc = std::move(next);
        }
        p.terms = freeze(acc);
        break;
    }
    }
    return p;
}

PolyProjection::PolyProjection(std::vector<PolyTerm> terms, IndexWeights idx, std::size_t d)
    : terms_(std::move(terms)), idx_(std::move(idx)), d_(d) {
    if (d_ > 15) throw ValidationError("at most 15 assets supported");
    idx_.validate(d_);
    polys_.reserve(terms_.size());
    for (const auto& t : terms_) polys_.push_back(term_poly(t));
    // Symbolic products for the Gram, computed once; boxes only change the
    // cached 1-D integrals at evaluation time.
    products_.resize(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        products_[i].resize(i + 1);
        for (std::size_t j = 0; j <= i; ++j) {
            Builder acc;
            for (const auto& [ka, ca] : polys_[i].terms)
                for (const auto& [kb, cb] : polys_[j].terms) {
                    std::uint64_t key = ka;
                    for (std::size_t k = 0; k < d_; ++k) {
                        const int e = exponent_of(kb, k);
                        if (e) key = bump_exponent(key, k, e);
                    }
                    acc[key] += ca * cb;
                }
            products_[i][j].terms = freeze(acc);
        }
    }
}

namespace {

// Mean of x^n over [lo, hi] (uniform measure), cached per box evaluation.
struct IntegralTable {
    Mat table; // d x (max_power+1)

    IntegralTable(const BoxDomain& box, int max_power) {
        const std::size_t d = box.dim();
        table.resize(d, max_power + 1);
        for (std::size_t k = 0; k < d; ++k) {
            const double lo = box.intervals[k][0], hi = box.intervals[k][1];
            double plo = lo, phi = hi; // powers n+1 built incrementally
            for (int n = 0; n <= max_power; ++n) {
                table(static_cast<Eigen::Index>(k), n) =
                    (phi - plo) / ((n + 1) * (hi - lo));
                plo *= lo;
                phi *= hi;
            }
        }
    }

    double eval(std::uint64_t key, std::size_t d) const {
        double acc = 1.0;
        for (std::size_t k = 0; k < d; ++k) {
            const int e = exponent_of(key, k);
            if (e) acc *= table(static_cast<Eigen::Index>(k), e);
        }
        return acc;
    }
};

} // namespace

Mat PolyProjection::gram(const BoxDomain& box) const {
    box.validate();
    if (box.dim() != d_) throw ValidationError("box dimension mismatch");
    IntegralTable it(box, 9);
    const std::size_t m = terms_.size();
    Mat G(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (const auto& [key, coeff] : products_[i][j].terms) acc += coeff * it.eval(key, d_);
            G(i, j) = acc;
            G(j, i) = acc;
        }
    return G;
}

Vec PolyProjection::rhs_pair(int i, int j, const BoxDomain& box) const {
    if (i == j) throw DomainError("rhs_pair requires i != j");
    IntegralTable it(box, 11);
    const std::size_t m = terms_.size();
    Vec b(m);
    for (std::size_t t = 0; t < m; ++t) {
        double acc = 0.0;
        for (const auto& [key, coeff] : polys_[t].terms) {
            std::uint64_t shifted = bump_exponent(key, static_cast<std::size_t>(i), 1);
            shifted = bump_exponent(shifted, static_cast<std::size_t>(j), 1);
            acc += coeff * it.eval(shifted, d_);
        }
        b(static_cast<Eigen::Index>(t)) = acc;
    }
    return b;
}

Vec PolyProjection::project_pair(int i, int j, const BoxDomain& box) const {
    const Mat G = gram(box);
    Eigen::FullPivLU<Mat> lu(G);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible()) {
        // Most common cause: two index portfolios with effectively identical
        // or collinear quadratic payoffs.
        for (std::size_t a = 0; a < idx_.count(); ++a)
            for (std::size_t b = a + 1; b < idx_.count(); ++b)
                if ((idx_.weights[a] - idx_.weights[b]).cwiseAbs().maxCoeff() < 1e-12)
                    throw NumericalError("projection Gram is singular: index weights " +
                                         std::to_string(a) + " and " + std::to_string(b) +
                                         " are duplicates");
        throw NumericalError("projection Gram is singular: index quadratics are collinear "
                             "with the asset monomials (e.g. two indices with d = 2)");
    }
    const Vec b = rhs_pair(i, j, box);
    Vec beta = lu.solve(b);
    beta += lu.solve(b - G * beta);
    return beta;
}

QuarticCoeffs quartic_projection_coeffs(int i, int j, const BoxDomain& box,
                                        const IndexWeights& weights) {
    box.validate();
    const std::size_t d = box.dim();
    if (i == j) throw DomainError("quartic projection requires i != j");
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= d || static_cast<std::size_t>(j) >= d)
        throw DomainError("pair indices out of range");
    auto terms = quartic_terms(d, weights.count());
    PolyProjection proj(terms, weights, d);
    QuarticCoeffs out;
    out.terms = std::move(terms);
    out.beta = proj.project_pair(i, j, box);
    out.i = i;
    out.j = j;
    return out;
}

double covariance_from_moments(const QuarticCoeffs& coeffs, const MomentInputs& moments) {
    moments.validate();
    if (coeffs.beta.size() != static_cast<Eigen::Index>(coeffs.terms.size()))
        throw ValidationError("coefficient layout does not match the term list");
    double acc = 0.0;
    for (std::size_t t = 0; t < coeffs.terms.size(); ++t) {
        const PolyTerm& term = coeffs.terms[t];
        const double beta = coeffs.beta(static_cast<Eigen::Index>(t));
        double moment = 0.0;
        switch (term.kind) {
        case PolyTerm::Kind::One:
            moment = 1.0;
            break;
        case PolyTerm::Kind::AssetPower:
            moment = term.power == 2 ? moments.var_assets(term.id) : moments.m4_assets(term.id);
            if (term.power != 2 && term.power != 4)
                throw ValidationError("moment inputs only cover powers 2 and 4");
            break;
        case PolyTerm::Kind::IndexPower:
            moment = term.power == 2 ? moments.var_indices(term.id) : moments.m4_indices(term.id);
            if (term.power != 2 && term.power != 4)
                throw ValidationError("moment inputs only cover powers 2 and 4");
            break;
        }
        acc += beta * moment;
    }
    return acc;
}

double equicorrelation(const MomentInputs& moments, const Vec& w) {
    moments.validate();
    const Eigen::Index d = moments.var_assets.size();
    if (d < 2) throw DomainError("equicorrelation needs at least two assets");
    if (w.size() != d) throw ValidationError("weight vector dimension mismatch");
    if (moments.var_indices.size() < 1) throw ValidationError("index variance required");
    double own = 0.0, cross = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) own += w(k) * w(k) * moments.var_assets(k);
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = a + 1; b < d; ++b)
            cross += w(a) * w(b) *
                     std::sqrt(moments.var_assets(a) * moments.var_assets(b));
    if (std::abs(cross) < 1e-300)
        throw DomainError("equicorrelation denominator is zero (degenerate weights)");
    return (moments.var_indices(0) - own) / (2.0 * cross);
}

Vec addition_residual(const Mat& cov, const MomentInputs& moments, const IndexWeights& weights) {
    const Eigen::Index d = cov.rows();
    weights.validate(static_cast<std::size_t>(d));
    Vec res(static_cast<Eigen::Index>(weights.count()));
    for (std::size_t l = 0; l < weights.count(); ++l) {
        const Vec& w = weights.weights[l];
        double acc = moments.var_indices(static_cast<Eigen::Index>(l));
        for (Eigen::Index k = 0; k < d; ++k) acc -= w(k) * w(k) * moments.var_assets(k);
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index b = a + 1; b < d; ++b) acc -= 2.0 * w(a) * w(b) * cov(a, b);
        res(static_cast<Eigen::Index>(l)) = acc;
    }
    return res;
}

CovEstimate shrink_to_equicorrelation(Mat corr, double target_rho, double min_eigenvalue) {
    const Eigen::Index d = corr.rows();
    if (corr.cols() != d || d < 2) throw ValidationError("correlation matrix must be square, d>=2");
    const double rho_lo = -1.0 / static_cast<double>(d - 1);
    if (target_rho <= rho_lo || target_rho >= 1.0)
        throw DomainError("equicorrelation target outside (-1/(d-1), 1)");

    // Clip raw estimates into [-1,1] before shrinking.
    for (Eigen::Index a = 0; a < d; ++a) {
        corr(a, a) = 1.0;
        for (Eigen::Index b = 0; b < d; ++b) {
            if (a == b) continue;
            corr(a, b) = std::min(1.0, std::max(-1.0, 0.5 * (corr(a, b) + corr(b, a))));
            corr(b, a) = corr(a, b);
        }
    }
    Mat equi = Mat::Constant(d, d, target_rho);
    equi.diagonal().setOnes();

    auto min_eig = [](const Mat& m) {
        Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    };
    const double equi_min = min_eig(equi);
    if (equi_min < min_eigenvalue)
        throw DomainError("even full shrinkage cannot reach the eigenvalue floor "
                          "(degenerate equicorrelation target)");

    double alpha = 0.0;
    if (min_eig(corr) < min_eigenvalue) {
        double lo = 0.0, hi = 1.0;
        while (hi - lo > 1e-6) {
            const double mid = 0.5 * (lo + hi);
            const Mat blend = (1.0 - mid) * corr + mid * equi;
            (min_eig(blend) >= min_eigenvalue ? hi : lo) = mid;
        }
        alpha = hi;
    }
    CovEstimate out;
    out.correlation = (1.0 - alpha) * corr + alpha * equi;
    out.covariance = out.correlation; // unit-variance scale; callers rescale
    out.shrinkage = alpha;
    return out;
}

SpanningEstimate spanning_covariance(double b1, double b2, double var1, double var2,
                                     double var3) {
    if (b1 * b2 == 0.0) throw DomainError("spanning estimator requires b1*b2 != 0");
    if (var1 <= 0.0 || var2 <= 0.0 || var3 <= 0.0)
        throw DomainError("variances must be positive");
    SpanningEstimate out;
    out.covariance = (var3 - b1 * b1 * var1 - b2 * b2 * var2) / (2.0 * b1 * b2);
    out.correlation = out.covariance / std::sqrt(var1 * var2);
    out.bias_sign = b1 * b2 > 0.0 ? +1 : -1;
    return out;
}

double separable_cross_estimate(const StrikeSet& strikes1, const StrikeSet& strikes2,
                                const StateGrid& grid1, const StateGrid& grid2,
                                const MarketQuotes& quotes) {
    auto check_centered = [](const StateGrid& g, const StrikeSet& s) {
        const double mid = 0.5 * (g.a_min() + g.a_max());
        if (std::abs(mid - s.forward) > 1e-9 * std::max(1.0, s.forward))
            throw ValidationError("grid midpoint must equal the forward (Prop. 9 setting)");
    };
    check_centered(grid1, strikes1);
    check_centered(grid2, strikes2);

    BasisSet b1 = BasisSet::univariate(strikes1, 0);
    BasisSet b2 = BasisSet::univariate(strikes2, 1);
    BasisSet sep;
    sep.elements = b1.elements; // bond + asset 0 payoffs
    for (const auto& e : b2.elements)
        if (e.kind != PayoffKind::Bond) sep.elements.push_back(e);
    sep.validate();

    DesignMatrix design = eval_design(sep, {grid1, grid2});
    Vec y(design.values.rows());
    Eigen::Index r = 0;
    for (double s1 : grid1.points)
        for (double s2 : grid2.points) y(r++) = s1 * s2;
    ReplicatingPortfolio p = fit(design, y, Ols{});
    return price(p, quotes);
}

std::string cov_estimate_to_csv(const CovEstimate& est) {
    std::string out;
    char buf[64];
    const Eigen::Index d = est.covariance.rows();
    std::snprintf(buf, sizeof(buf), "# shrinkage_alpha,%.12g\n", est.shrinkage);
    out += buf;
    for (Eigen::Index l = 0; l < est.addition_residuals.size(); ++l) {
        std::snprintf(buf, sizeof(buf), "# addition_residual_%d,%.12g\n", static_cast<int>(l),
                      est.addition_residuals(l));
        out += buf;
    }
    auto emit = [&](const char* name, const Mat& m) {
        out += std::string("matrix,") + name + "\n";
        for (Eigen::Index a = 0; a < d; ++a) {
            for (Eigen::Index b = 0; b < d; ++b) {
                std::snprintf(buf, sizeof(buf), "%.12g", m(a, b));
                out += buf;
                out += (b + 1 == d) ? "\n" : ",";
            }
        }
    };
    emit("covariance", est.covariance);
    emit("correlation", est.correlation);
    return out;
}

} // namespace rnp::multi
