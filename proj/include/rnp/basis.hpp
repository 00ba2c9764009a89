#pragma once

#include "rnp/grid.hpp"

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rnp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Out-of-the-money strike menu for one underlying: puts at K <= F,
// calls at K > F.
struct StrikeSet {
    std::vector<double> put_strikes;  // ascending
    std::vector<double> call_strikes; // ascending
    double forward = 0.0;

    std::size_t n_k() const { return put_strikes.size() + call_strikes.size(); }
    void validate() const;

    // Split an arbitrary sorted strike list at the forward (K == F goes to
    // the put side).
    static StrikeSet split(const std::vector<double>& strikes, double forward);
};

enum class PayoffKind { Bond, Underlying, Put, Call, CrossCall };

// One basis element. CrossCall pays S_den * max(S_num/S_den - K, 0).
struct Payoff {
    PayoffKind kind = PayoffKind::Bond;
    int asset = 0;       // Underlying/Put/Call; numerator for CrossCall
    int denom_asset = 0; // CrossCall only
    double strike = 0.0;

    bool operator==(const Payoff&) const = default;
    std::string describe() const;
};

// Ordered payoff basis. Column order is fixed as
// [Bond, Underlyings by asset, Puts, Calls, CrossCalls ascending strike]
// so coefficient vectors are comparable across runs.
struct BasisSet {
    std::vector<Payoff> elements;

    std::size_t size() const { return elements.size(); }
    void validate() const;

    // [Bond, Underlying, Puts asc, Calls asc] for a single asset.
    static BasisSet univariate(const StrikeSet& strikes, int asset = 0);
    // Same but calls only on both legs plus cross calls (FX layout):
    // [Bond, U_num, Calls_num, U_den, Calls_den, CrossCalls].
    static BasisSet fx(const std::vector<double>& calls_num,
                       const std::vector<double>& calls_den,
                       const std::vector<double>& cross_calls,
                       int num_asset = 0, int den_asset = 1);
};

double eval_payoff(const Payoff& p, std::span<const double> state_by_asset);
double eval_payoff1(const Payoff& p, double s); // univariate fast path

// State-by-state payoff evaluation.
struct DesignMatrix {
    Mat values; // n_states x basis size
    BasisSet basis;
    std::vector<StateGrid> grids; // one per asset id, ascending ids
};

// Univariate design: one grid, single-asset basis.
DesignMatrix eval_design(const BasisSet& basis, const StateGrid& grid);
// Multi-asset design on the tensor-product state set; grids[k] belongs to
// asset id k. Rows run row-major with asset 0 outermost.
DesignMatrix eval_design(const BasisSet& basis, const std::vector<StateGrid>& grids);

// Exact Gram matrix of pairwise inner products <phi_i, phi_j> over
// [a_min, a_max] (univariate bases only). Entries are integrals of products
// of affine pieces, evaluated in closed form.
Mat gram_analytic(const BasisSet& basis, double a_min, double a_max);

// Closed-form right-hand side for indicator targets: b_j(x) = int_a^x phi_j.
Vec indicator_inner_products(const BasisSet& basis, double a_min, double a_max, double x);

// <phi_j, g> over [a_min, a_max] by composite Simpson on the segments
// between basis kinks; exact when g is piecewise quadratic with kinks among
// `extra_breaks`.
Vec target_inner_products(const BasisSet& basis, double a_min, double a_max,
                          const std::function<double(double)>& g,
                          std::span<const double> extra_breaks = {},
                          int subdivisions_per_segment = 64);

// Sorted breakpoints {a_min, strikes..., a_max} of a univariate basis.
std::vector<double> basis_breakpoints(const BasisSet& basis, double a_min, double a_max);

// True when the univariate basis spans every piecewise-linear function on
// its breakpoints (bond + underlying + one hinge per strike).
bool spans_piecewise_linear(const BasisSet& basis);

// Coefficients on `basis` of the polyline with the given nodal values;
// nodes must equal basis_breakpoints(basis, nodes.front(), nodes.back()).
Vec polyline_coefficients(const std::vector<double>& nodes, const Vec& values,
                          const BasisSet& basis);

} // namespace rnp
