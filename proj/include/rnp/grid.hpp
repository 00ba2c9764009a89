#pragma once

#include <vector>

namespace rnp {

// Researcher-chosen grid of terminal prices; endpoints define the
// approximation domain [a_min, a_max].
struct StateGrid {
    std::vector<double> points; // strictly increasing, positive

    double a_min() const { return points.front(); }
    double a_max() const { return points.back(); }
    std::size_t size() const { return points.size(); }
    double mesh() const; // max spacing
};

enum class GridSpacing { Uniform, Explicit };

StateGrid build_state_grid(double a_min, double a_max, std::size_t n_s);
StateGrid build_state_grid(std::vector<double> explicit_points);

} // namespace rnp
