#pragma once

#include "rnp/projector.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace rnp::multi {

// Per-asset intervals for excess returns x_k.
struct BoxDomain {
    std::vector<std::array<double, 2>> intervals;

    std::size_t dim() const { return intervals.size(); }
    bool symmetric() const;
    void validate() const;

    // Symmetric default: +/- width_sigmas * sqrt(var_k) around 0.
    static BoxDomain symmetric_from_variances(const Vec& variances, double width_sigmas = 3.0);
};

// Weight vectors of the index portfolios (value-weighted, equal-weighted, ...).
struct IndexWeights {
    std::vector<Vec> weights; // each sums to 1 within 1e-12

    std::size_t count() const { return weights.size(); }
    void validate(std::size_t d) const;
};

// Risk-neutral moments of excess returns x_k = R_k - R_f: second and fourth
// moments per asset and per index (zero-mean convention, E x = 0).
struct MomentInputs {
    Vec var_assets;
    Vec m4_assets;
    Vec var_indices;
    Vec m4_indices;
    double gross_rate = 1.0;

    void validate() const;
};

struct CovEstimate {
    Mat covariance;
    Mat correlation;
    double shrinkage = 0.0;
    Vec addition_residuals;
};

// A member of the polynomial projection space.
struct PolyTerm {
    enum class Kind { One, AssetPower, IndexPower };
    Kind kind = Kind::One;
    int id = 0;
    int power = 0;
};

// Standard quartic layout: {1, x_1^2..x_d^2, x_1^4..x_d^4, x_M^2, x_M^4 per index}.
std::vector<PolyTerm> quartic_terms(std::size_t d, std::size_t n_indices);

// Closed-form L2 projection machinery under the uniform product measure on a
// box: every Gram entry and right-hand side is a sum of products of
// one-dimensional monomial integrals. Term expansions are symbolic and
// box-independent; only the cached 1-D integrals change with the box.
class PolyProjection {
public:
    PolyProjection(std::vector<PolyTerm> terms, IndexWeights idx, std::size_t d);

    Mat gram(const BoxDomain& box) const;
    Vec rhs_pair(int i, int j, const BoxDomain& box) const; // <x_i x_j, term>
    // Projection coefficients of x_i x_j onto the term space.
    Vec project_pair(int i, int j, const BoxDomain& box) const;

    const std::vector<PolyTerm>& terms() const { return terms_; }

private:
    struct Poly {
        std::vector<std::pair<std::uint64_t, double>> terms; // packed exponents
    };
    Poly term_poly(const PolyTerm& t) const;

    std::vector<PolyTerm> terms_;
    IndexWeights idx_;
    std::size_t d_;
    std::vector<Poly> polys_;                 // one per term
    std::vector<std::vector<Poly>> products_; // lower-triangular products
};

struct QuarticCoeffs {
    std::vector<PolyTerm> terms;
    Vec beta;
    int i = 0;
    int j = 0;
};

QuarticCoeffs quartic_projection_coeffs(int i, int j, const BoxDomain& box,
                                        const IndexWeights& weights);

// beta_0 + sum_k (beta_k Var_k + gamma_k M4_k) + per index (beta_M Var_M + gamma_M M4_M).
double covariance_from_moments(const QuarticCoeffs& coeffs, const MomentInputs& moments);

// CBOE-style implied equicorrelation from one index.
double equicorrelation(const MomentInputs& moments, const Vec& index_weights);

// Per-index residual of Var_M = sum w^2 Var + 2 sum w_i w_j Cov_ij.
Vec addition_residual(const Mat& cov, const MomentInputs& moments, const IndexWeights& weights);

// Smallest blend toward the equicorrelation matrix that lifts the minimum
// eigenvalue to min_eigenvalue; off-diagonals are clipped to [-1,1] first.
CovEstimate shrink_to_equicorrelation(Mat corr, double target_rho, double min_eigenvalue = 1e-3);

struct SpanningEstimate {
    double covariance = 0.0;
    double correlation = 0.0;
    // +1: estimate is an upper bound (b1 b2 > 0); -1: lower bound.
    int bias_sign = 0;
};

SpanningEstimate spanning_covariance(double b1, double b2, double var1, double var2, double var3);

// Prop-9 style executable check: price the separable projection of S1*S2 on
// two single-asset option menus whose domains are centered at the forwards.
double separable_cross_estimate(const StrikeSet& strikes1, const StrikeSet& strikes2,
                                const StateGrid& grid1, const StateGrid& grid2,
                                const MarketQuotes& quotes);

// CSV export of a covariance/correlation estimate with metadata rows.
std::string cov_estimate_to_csv(const CovEstimate& est);

} // namespace rnp::multi
