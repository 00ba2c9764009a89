#pragma once

#include "rnp/projector.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rnp {

// Grid-sampled risk-neutral CDF/PDF pair. The raw (non-monotonized) estimate
// also carries its exact piecewise-linear density: nodal values on the basis
// breakpoints, from which cdf/pdf samples are derived.
struct RNDistribution {
    std::vector<double> eval_points;
    std::vector<double> cdf;
    std::vector<double> pdf;
    bool monotonized = false;

    double a_min = 0.0;
    double a_max = 0.0;
    std::vector<double> nodes;    // valid when !monotonized
    std::vector<double> node_pdf; // density values at the nodes
};

// Project indicator payoffs in the continuous-state limit: one Gram
// factorization serves every evaluation point. The resulting density is
// piecewise linear with kinks only at strikes.
RNDistribution estimate_cdf(const BasisSet& basis, double a_min, double a_max,
                            const MarketQuotes& quotes, const std::vector<double>& eval_points);

// Convenience overload with a uniform evaluation grid.
RNDistribution estimate_cdf(const BasisSet& basis, double a_min, double a_max,
                            const MarketQuotes& quotes, std::size_t n_eval = 501);

// Sort the CDF values, clip to [0,1], and recompute the pdf by finite
// differences. Requires a regular evaluation grid.
RNDistribution rearrange_monotone(const RNDistribution& dist);

// int_A g dF for the raw estimate; exact for polynomial/hinge g whose kinks
// are passed in extra_breaks, composite Simpson otherwise.
double moment_from_distribution(const std::function<double(double)>& g, const RNDistribution& dist,
                                std::span<const double> extra_breaks = {},
                                int subdivisions_per_segment = 64);

// CSV export with columns x, cdf, pdf, monotonized.
std::string distribution_to_csv(const RNDistribution& dist);

} // namespace rnp
