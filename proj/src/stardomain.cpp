#include "shape2field/stardomain.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace s2f {

namespace {
constexpr double kMinRadius = 0.2;
constexpr double kMaxRadius = 0.8;
} // namespace

double StarDomain::angle(int64_t i) const {
    return 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(size());
}

bool StarDomain::contains(double x, double y) const {
    // even-odd ray cast toward +x
    const int64_t n = size();
    bool inside = false;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t j = (i + 1) % n;
        const double xi = boundary_points[i * 2], yi = boundary_points[i * 2 + 1];
        const double xj = boundary_points[j * 2], yj = boundary_points[j * 2 + 1];
        if ((yi > y) != (yj > y)) {
            const double x_cross = xi + (y - yi) / (yj - yi) * (xj - xi);
            if (x < x_cross) {
                inside = !inside;
            }
        }
    }
    return inside;
}

StarDomain make_star_domain(std::vector<double> radii) {
    check(radii.size() >= 3, "boundary needs at least 3 points");
    StarDomain dom;
    dom.radii = std::move(radii);
    const int64_t n = dom.size();
    dom.boundary_points = Tensor({n, 2});
    for (int64_t i = 0; i < n; ++i) {
        const double r = dom.radii[static_cast<size_t>(i)];
        check(r > 0.0, "radii must be positive");
        const double th = dom.angle(i);
        dom.boundary_points[i * 2] = r * std::cos(th);
        dom.boundary_points[i * 2 + 1] = r * std::sin(th);
    }
    return dom;
}

StarDomain sample_domain(uint64_t seed, int64_t n_b, int n_modes, double smoothness) {
    check(n_b >= 8, "n_b must be >= 8");
    check(n_modes >= 0, "n_modes must be >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<double> a(static_cast<size_t>(n_modes)), b(static_cast<size_t>(n_modes));
    for (int k = 0; k < n_modes; ++k) {
        const double sigma = smoothness / static_cast<double>(k + 1);
        a[static_cast<size_t>(k)] = sigma * gauss(rng);
        b[static_cast<size_t>(k)] = sigma * gauss(rng);
    }

    std::vector<double> radii(static_cast<size_t>(n_b));
    for (int64_t i = 0; i < n_b; ++i) {
        const double th = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n_b);
        double r = 0.5;
        for (int k = 0; k < n_modes; ++k) {
            const double kk = static_cast<double>(k + 1);
            r += a[static_cast<size_t>(k)] * std::cos(kk * th) +
                 b[static_cast<size_t>(k)] * std::sin(kk * th);
        }
        radii[static_cast<size_t>(i)] = std::clamp(r, kMinRadius, kMaxRadius);
    }
    return make_star_domain(std::move(radii));
}

} // namespace s2f
