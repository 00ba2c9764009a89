#include "rnp/basis.hpp"
#include "rnp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace rnp {

static std::string fmt_strike(double k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", k);
    return buf;
}

void StrikeSet::validate() const {
    auto check_side = [](const std::vector<double>& ks, const char* side) {
        for (std::size_t i = 0; i < ks.size(); ++i) {
            if (ks[i] <= 0.0) throw DomainError(std::string(side) + " strike must be positive");
            if (i > 0 && ks[i] <= ks[i - 1])
                throw ValidationError(std::string(side) + " strikes must be strictly increasing");
        }
    };
    check_side(put_strikes, "put");
    check_side(call_strikes, "call");
    if (forward <= 0.0) throw DomainError("forward must be positive");
    if (!put_strikes.empty() && put_strikes.back() > forward)
        throw ValidationError("put strikes must not exceed the forward");
    if (!call_strikes.empty() && call_strikes.front() <= forward)
        throw ValidationError("call strikes must exceed the forward");
    std::set<double> all(put_strikes.begin(), put_strikes.end());
    for (double k : call_strikes)
        if (!all.insert(k).second)
            throw ValidationError("duplicate strike " + fmt_strike(k) + " across put and call sides");
}

StrikeSet StrikeSet::split(const std::vector<double>& strikes, double forward) {
    StrikeSet out;
    out.forward = forward;
    for (double k : strikes)
        (k <= forward ? out.put_strikes : out.call_strikes).push_back(k);
    std::sort(out.put_strikes.begin(), out.put_strikes.end());
    std::sort(out.call_strikes.begin(), out.call_strikes.end());
    out.validate();
    return out;
}

std::string Payoff::describe() const {
    switch (kind) {
    case PayoffKind::Bond: return "Bond";
    case PayoffKind::Underlying: return "Underlying(" + std::to_string(asset) + ")";
    case PayoffKind::Put:
        return "Put(" + std::to_string(asset) + ", K=" + fmt_strike(strike) + ")";
    case PayoffKind::Call:
        return "Call(" + std::to_string(asset) + ", K=" + fmt_strike(strike) + ")";
    case PayoffKind::CrossCall:
        return "CrossCall(" + std::to_string(asset) + "/" + std::to_string(denom_asset) +
               ", K=" + fmt_strike(strike) + ")";
    }
    return "?";
}

void BasisSet::validate() const {
    if (elements.empty()) throw ValidationError("basis must not be empty");
    for (std::size_t i = 0; i < elements.size(); ++i) {
        const auto& e = elements[i];
        if ((e.kind == PayoffKind::Put || e.kind == PayoffKind::Call ||
             e.kind == PayoffKind::CrossCall) && e.strike <= 0.0)
            throw DomainError("strike must be positive in " + e.describe());
        for (std::size_t j = i + 1; j < elements.size(); ++j)
            if (elements[j] == e)
                throw ValidationError("duplicate basis element " + e.describe());
    }
    // A put and a call at the same strike on the same asset are redundant
    // given bond and underlying; reject so the Gram stays nonsingular.
    for (const auto& p : elements) {
        if (p.kind != PayoffKind::Put) continue;
        for (const auto& c : elements)
            if (c.kind == PayoffKind::Call && c.asset == p.asset && c.strike == p.strike)
                throw ValidationError("put and call share strike " + fmt_strike(p.strike) +
                                      " on asset " + std::to_string(p.asset) +
                                      "; drop one side (put-call parity makes both redundant)");
    }
}

BasisSet BasisSet::univariate(const StrikeSet& strikes, int asset) {
    strikes.validate();
    BasisSet b;
    b.elements.push_back({PayoffKind::Bond});
    b.elements.push_back({PayoffKind::Underlying, asset});
    for (double k : strikes.put_strikes) b.elements.push_back({PayoffKind::Put, asset, 0, k});
    for (double k : strikes.call_strikes) b.elements.push_back({PayoffKind::Call, asset, 0, k});
    b.validate();
    return b;
}

BasisSet BasisSet::fx(const std::vector<double>& calls_num, const std::vector<double>& calls_den,
                      const std::vector<double>& cross_calls, int num_asset, int den_asset) {
    BasisSet b;
    b.elements.push_back({PayoffKind::Bond});
    b.elements.push_back({PayoffKind::Underlying, num_asset});
    for (double k : calls_num) b.elements.push_back({PayoffKind::Call, num_asset, 0, k});
    b.elements.push_back({PayoffKind::Underlying, den_asset});
    for (double k : calls_den) b.elements.push_back({PayoffKind::Call, den_asset, 0, k});
    for (double k : cross_calls)
        b.elements.push_back({PayoffKind::CrossCall, num_asset, den_asset, k});
    b.validate();
    return b;
}

double eval_payoff(const Payoff& p, std::span<const double> s) {
    switch (p.kind) {
    case PayoffKind::Bond: return 1.0;
    case PayoffKind::Underlying: return s[p.asset];
    case PayoffKind::Put: return std::max(p.strike - s[p.asset], 0.0);
    case PayoffKind::Call: return std::max(s[p.asset] - p.strike, 0.0);
    case PayoffKind::CrossCall:
        return s[p.denom_asset] * std::max(s[p.asset] / s[p.denom_asset] - p.strike, 0.0);
    }
    return 0.0;
}

double eval_payoff1(const Payoff& p, double s) {
    switch (p.kind) {
    case PayoffKind::Bond: return 1.0;
    case PayoffKind::Underlying: return s;
    case PayoffKind::Put: return std::max(p.strike - s, 0.0);
    case PayoffKind::Call: return std::max(s - p.strike, 0.0);
    case PayoffKind::CrossCall:
        throw ValidationError("cross call is not a univariate payoff");
    }
    return 0.0;
}

static int max_asset_id(const BasisSet& basis) {
    int m = 0;
    for (const auto& e : basis.elements) {
        if (e.kind == PayoffKind::Bond) continue;
        m = std::max(m, e.asset);
        if (e.kind == PayoffKind::CrossCall) m = std::max(m, e.denom_asset);
    }
    return m;
}

DesignMatrix eval_design(const BasisSet& basis, const StateGrid& grid) {
    basis.validate();
    if (max_asset_id(basis) != 0)
        throw ValidationError("univariate design requested for a multi-asset basis");
    const std::size_t n = grid.size();
    const std::size_t m = basis.size();
    Mat X(n, m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i)
            X(i, j) = eval_payoff1(basis.elements[j], grid.points[i]);
    return DesignMatrix{std::move(X), basis, {grid}};
}

DesignMatrix eval_design(const BasisSet& basis, const std::vector<StateGrid>& grids) {
    basis.validate();
    const int top = max_asset_id(basis);
    if (static_cast<std::size_t>(top) >= grids.size())
        throw ValidationError("missing state grid for asset id " + std::to_string(top));
    std::size_t rows = 1;
    for (const auto& g : grids) rows *= g.size();

    const std::size_t d = grids.size();
    const std::size_t m = basis.size();
    Mat X(rows, m);
    std::vector<double> state(d);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t rem = r;
        for (std::size_t k = d; k-- > 0;) { // row-major, asset 0 outermost
            idx[k] = rem % grids[k].size();
            rem /= grids[k].size();
        }
        for (std::size_t k = 0; k < d; ++k) state[k] = grids[k].points[idx[k]];
        for (std::size_t j = 0; j < m; ++j)
            X(r, j) = eval_payoff(basis.elements[j], state);
    }
    return DesignMatrix{std::move(X), basis, grids};
}

// ---------------------------------------------------------------------------
// Exact integrals over [a_min, a_max]
// ---------------------------------------------------------------------------

// Kink of a univariate payoff inside (a, b), if any.
static bool payoff_kink(const Payoff& p, double a, double b, double& kink) {
    if ((p.kind == PayoffKind::Put || p.kind == PayoffKind::Call) && p.strike > a && p.strike < b) {
        kink = p.strike;
        return true;
    }
    return false;
}

// Exact integral of a product of two affine segments from endpoint values.
static double affine_product_integral(double lo, double hi, double f0, double f1, double g0,
                                      double g1) {
    const double h = hi - lo;
    return h / 6.0 * (f0 * (2.0 * g0 + g1) + f1 * (g0 + 2.0 * g1));
}

std::vector<double> basis_breakpoints(const BasisSet& basis, double a_min, double a_max) {
    std::vector<double> brk{a_min, a_max};
    for (const auto& e : basis.elements) {
        double k;
        if (payoff_kink(e, a_min, a_max, k)) brk.push_back(k);
    }
    std::sort(brk.begin(), brk.end());
    brk.erase(std::unique(brk.begin(), brk.end()), brk.end());
    return brk;
}

Mat gram_analytic(const BasisSet& basis, double a_min, double a_max) {
    basis.validate();
    if (max_asset_id(basis) != 0)
        throw ValidationError("gram_analytic supports univariate bases only");
    if (a_min < 0.0 || a_max <= a_min) throw DomainError("invalid bounds");
    for (const auto& e : basis.elements)
        if ((e.kind == PayoffKind::Put || e.kind == PayoffKind::Call) &&
            (e.strike <= a_min || e.strike >= a_max))
            throw DomainError("strike " + fmt_strike(e.strike) +
                              " lies outside (a_min, a_max); hinge support would be clipped");

    const std::size_t m = basis.size();
    Mat G(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            const Payoff& f = basis.elements[i];
            const Payoff& g = basis.elements[j];
            std::vector<double> brk{a_min, a_max};
            double k;
            if (payoff_kink(f, a_min, a_max, k)) brk.push_back(k);
            if (payoff_kink(g, a_min, a_max, k)) brk.push_back(k);
            std::sort(brk.begin(), brk.end());
            brk.erase(std::unique(brk.begin(), brk.end()), brk.end());
            double acc = 0.0;
            for (std::size_t z = 1; z < brk.size(); ++z) {
                const double lo = brk[z - 1], hi = brk[z];
                acc += affine_product_integral(lo, hi, eval_payoff1(f, lo), eval_payoff1(f, hi),
                                               eval_payoff1(g, lo), eval_payoff1(g, hi));
            }
            G(i, j) = acc;
            G(j, i) = acc;
        }
    }
    return G;
}

Vec indicator_inner_products(const BasisSet& basis, double a_min, double a_max, double x) {
    if (x < a_min || x > a_max) throw DomainError("evaluation point outside [a_min, a_max]");
    const std::size_t m = basis.size();
    Vec b(m);
    for (std::size_t j = 0; j < m; ++j) {
        const Payoff& p = basis.elements[j];
        double v = 0.0;
        switch (p.kind) {
        case PayoffKind::Bond: v = x - a_min; break;
        case PayoffKind::Underlying: v = 0.5 * (x * x - a_min * a_min); break;
        case PayoffKind::Call: {
            const double t = std::max(x - p.strike, 0.0);
            v = 0.5 * t * t;
            break;
        }
        case PayoffKind::Put: {
            const double lo = std::max(p.strike - a_min, 0.0);
            const double t = std::max(p.strike - x, 0.0);
            v = 0.5 * (lo * lo - t * t);
            break;
        }
        case PayoffKind::CrossCall:
            throw ValidationError("cross call is not a univariate payoff");
        }
        b(j) = v;
    }
    return b;
}

bool spans_piecewise_linear(const BasisSet& basis) {
    bool bond = false, underlying = false;
    for (const auto& e : basis.elements) {
        if (e.kind == PayoffKind::Bond) bond = true;
        if (e.kind == PayoffKind::Underlying) underlying = true;
        if (e.kind == PayoffKind::CrossCall) return false;
    }
    return bond && underlying;
}

Vec polyline_coefficients(const std::vector<double>& nodes, const Vec& values,
                          const BasisSet& basis) {
    const std::size_t n = nodes.size();
    const std::size_t m = basis.size();
    if (values.size() != static_cast<Eigen::Index>(n))
        throw ValidationError("polyline nodal value count mismatch");
    Vec beta = Vec::Zero(m);
    auto slope = [&](std::size_t seg) {
        return (values(static_cast<Eigen::Index>(seg + 1)) -
                values(static_cast<Eigen::Index>(seg))) /
               (nodes[seg + 1] - nodes[seg]);
    };
    // Hinge coefficient = slope jump of the polyline at its strike (holds
    // for puts and calls alike; the affine remainder absorbs the rest).
    for (std::size_t j = 0; j < m; ++j) {
        const Payoff& e = basis.elements[j];
        if (e.kind != PayoffKind::Put && e.kind != PayoffKind::Call) continue;
        const auto it = std::lower_bound(nodes.begin(), nodes.end(), e.strike);
        if (it == nodes.end() || *it != e.strike)
            throw ValidationError("strike " + fmt_strike(e.strike) + " is not a polyline node");
        const std::size_t pos = static_cast<std::size_t>(it - nodes.begin());
        if (pos == 0 || pos + 1 == n)
            throw ValidationError("strike coincides with a domain endpoint");
        beta(static_cast<Eigen::Index>(j)) = slope(pos) - slope(pos - 1);
    }
    auto hinge_sum = [&](double x) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const Payoff& e = basis.elements[j];
            if (e.kind == PayoffKind::Put || e.kind == PayoffKind::Call)
                acc += beta(static_cast<Eigen::Index>(j)) * eval_payoff1(e, x);
        }
        return acc;
    };
    const double r0 = values(0) - hinge_sum(nodes.front());
    const double r1 = values(static_cast<Eigen::Index>(n - 1)) - hinge_sum(nodes.back());
    const double slope_affine = (r1 - r0) / (nodes.back() - nodes.front());
    const double intercept = r0 - slope_affine * nodes.front();
    bool have_bond = false, have_underlying = false;
    for (std::size_t j = 0; j < m; ++j) {
        if (basis.elements[j].kind == PayoffKind::Bond) {
            beta(static_cast<Eigen::Index>(j)) = intercept;
            have_bond = true;
        }
        if (basis.elements[j].kind == PayoffKind::Underlying) {
            beta(static_cast<Eigen::Index>(j)) = slope_affine;
            have_underlying = true;
        }
    }
    if (!have_bond || !have_underlying)
        throw ValidationError("basis cannot represent an affine remainder");
    return beta;
}

Vec target_inner_products(const BasisSet& basis, double a_min, double a_max,
                          const std::function<double(double)>& g,
                          std::span<const double> extra_breaks, int subdivisions_per_segment) {
    auto brk = basis_breakpoints(basis, a_min, a_max);
    for (double x : extra_breaks)
        if (x > a_min && x < a_max) brk.push_back(x);
    std::sort(brk.begin(), brk.end());
    brk.erase(std::unique(brk.begin(), brk.end()), brk.end());

    const std::size_t m = basis.size();
    const int sub = std::max(1, subdivisions_per_segment);
    Vec b = Vec::Zero(m);
    for (std::size_t z = 1; z < brk.size(); ++z) {
        const double lo = brk[z - 1], hi = brk[z];
        const double h = (hi - lo) / sub;
        for (int q = 0; q < sub; ++q) {
            const double u = lo + q * h;
            const double v = u + h;
            const double mid = 0.5 * (u + v);
            const double gu = g(u), gm = g(mid), gv = g(v);
            for (std::size_t j = 0; j < m; ++j) {
                const Payoff& p = basis.elements[j];
                // Simpson is exact here whenever g is quadratic on the
                // segment (phi is affine between breakpoints).
                b(j) += h / 6.0 * (gu * eval_payoff1(p, u) + 4.0 * gm * eval_payoff1(p, mid) +
                                   gv * eval_payoff1(p, v));
            }
        }
    }
    return b;
}

} // namespace rnp
