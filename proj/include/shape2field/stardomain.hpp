#pragma once

#include <cstdint>
#include <vector>

#include "shape2field/tensor.hpp"

namespace s2f {

/// Closed star-shaped boundary about the origin: point i sits at angle
/// theta_i = 2*pi*i / n_b with radius radii[i], clamped to [0.2, 0.8].
struct StarDomain {
    std::vector<double> radii;
    Tensor boundary_points; // [n_b x 2]

    int64_t size() const { return static_cast<int64_t>(radii.size()); }
    double angle(int64_t i) const;
    /// Point-in-polygon test against the boundary polygon.
    bool contains(double x, double y) const;
};

StarDomain make_star_domain(std::vector<double> radii);

/// Draws a random boundary: r(theta) = 0.5 + sum_k a_k cos(k theta) +
/// b_k sin(k theta) with a_k, b_k ~ N(0, (smoothness/k)^2), clamped to
/// [0.2, 0.8]. Deterministic in the seed.
StarDomain sample_domain(uint64_t seed, int64_t n_b = 144, int n_modes = 6,
                         double smoothness = 0.12);

} // namespace s2f
