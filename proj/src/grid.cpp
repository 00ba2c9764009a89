#include "rnp/grid.hpp"
#include "rnp/errors.hpp"

#include <algorithm>

namespace rnp {

double StateGrid::mesh() const {
    double m = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        m = std::max(m, points[i] - points[i - 1]);
    return m;
}

static void validate_points(const std::vector<double>& pts) {
    if (pts.size() < 2) throw ValidationError("state grid needs at least 2 points");
    if (pts.front() <= 0.0) throw DomainError("state grid points must be positive");
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (pts[i] <= pts[i - 1])
            throw ValidationError("state grid points must be strictly increasing");
}

StateGrid build_state_grid(double a_min, double a_max, std::size_t n_s) {
    if (a_min <= 0.0) throw DomainError("a_min must be positive");
    if (a_max <= a_min) throw DomainError("a_max must exceed a_min");
    if (n_s < 2) throw DomainError("n_s must be at least 2");
    std::vector<double> pts(n_s);
    const double h = (a_max - a_min) / static_cast<double>(n_s - 1);
    for (std::size_t i = 0; i < n_s; ++i)
        pts[i] = a_min + h * static_cast<double>(i);
    pts.back() = a_max; // exact endpoint
    return StateGrid{std::move(pts)};
}

StateGrid build_state_grid(std::vector<double> explicit_points) {
    validate_points(explicit_points);
    return StateGrid{std::move(explicit_points)};
}

} // namespace rnp
