#include "shape2field/poisson.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace s2f {

namespace {

constexpr double kCgTolerance = 1e-10;

struct InteriorGrid {
    int64_t grid_n = 0;
    double h = 0.0;
    std::vector<int64_t> unknown_of_node; // grid_n*grid_n, -1 outside
    std::vector<int64_t> node_of_unknown; // flat node index per unknown
};

// y = A x with A the 5-point negative Laplacian restricted to interior
// nodes (zero Dirichlet data at exterior neighbors).
void apply_laplacian(const InteriorGrid& g, const std::vector<double>& x,
                     std::vector<double>& y) {
    const int64_t n = g.grid_n;
    const double inv_h2 = 1.0 / (g.h * g.h);
    for (size_t u = 0; u < g.node_of_unknown.size(); ++u) {
        const int64_t node = g.node_of_unknown[u];
        const int64_t ix = node % n;
        const int64_t iy = node / n;
        double acc = 4.0 * x[u];
        auto neighbor = [&](int64_t jx, int64_t jy) {
            if (jx < 0 || jx >= n || jy < 0 || jy >= n) {
                return;
            }
            const int64_t v = g.unknown_of_node[static_cast<size_t>(jy * n + jx)];
            if (v >= 0) {
                acc -= x[static_cast<size_t>(v)];
            }
        };
        neighbor(ix - 1, iy);
        neighbor(ix + 1, iy);
        neighbor(ix, iy - 1);
        neighbor(ix, iy + 1);
        y[u] = acc * inv_h2;
    }
}

std::vector<double> conjugate_gradient(const InteriorGrid& g, const std::vector<double>& rhs) {
    const size_t n = rhs.size();
    std::vector<double> x(n, 0.0), r = rhs, p = rhs, ap(n);

    double rr = 0.0, bb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        rr += r[i] * r[i];
        bb += rhs[i] * rhs[i];
    }
    if (bb == 0.0) {
        return x;
    }
    const double stop = kCgTolerance * kCgTolerance * bb;
    const size_t max_iter = 20 * n + 100;
    for (size_t it = 0; it < max_iter && rr > stop; ++it) {
        apply_laplacian(g, p, ap);
        double pap = 0.0;
        for (size_t i = 0; i < n; ++i) {
            pap += p[i] * ap[i];
        }
        const double alpha = rr / pap;
        double rr_next = 0.0;
        for (size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            rr_next += r[i] * r[i];
        }
        const double beta = rr_next / rr;
        rr = rr_next;
        for (size_t i = 0; i < n; ++i) {
            p[i] = r[i] + beta * p[i];
        }
    }
    if (rr > stop) {
        throw std::runtime_error("poisson solver did not converge");
    }
    return x;
}

} // namespace

PoissonSample solve_poisson(const StarDomain& domain, int64_t grid_n, double load) {
    check(grid_n >= 16, "grid_n must be >= 16");

    InteriorGrid grid;
    grid.grid_n = grid_n;
    grid.h = 2.0 / static_cast<double>(grid_n - 1);
    grid.unknown_of_node.assign(static_cast<size_t>(grid_n * grid_n), -1);
    for (int64_t iy = 0; iy < grid_n; ++iy) {
        const double y = -1.0 + grid.h * static_cast<double>(iy);
        for (int64_t ix = 0; ix < grid_n; ++ix) {
            const double x = -1.0 + grid.h * static_cast<double>(ix);
            if (domain.contains(x, y)) {
                grid.unknown_of_node[static_cast<size_t>(iy * grid_n + ix)] =
                    static_cast<int64_t>(grid.node_of_unknown.size());
                grid.node_of_unknown.push_back(iy * grid_n + ix);
            }
        }
    }
    const size_t n_unknown = grid.node_of_unknown.size();
    if (n_unknown == 0) {
        throw std::runtime_error("degenerate domain");
    }

    std::vector<double> rhs(n_unknown, load);
    std::vector<double> u = conjugate_gradient(grid, rhs);

    PoissonSample sample;
    sample.boundary = domain.boundary_points;
    sample.load = load;
    sample.queries = Tensor({static_cast<int64_t>(n_unknown), 2});
    sample.solution = Tensor({static_cast<int64_t>(n_unknown), 1});
    for (size_t i = 0; i < n_unknown; ++i) {
        const int64_t node = grid.node_of_unknown[i];
        sample.queries[static_cast<int64_t>(i) * 2] =
            -1.0 + grid.h * static_cast<double>(node % grid_n);
        sample.queries[static_cast<int64_t>(i) * 2 + 1] =
            -1.0 + grid.h * static_cast<double>(node / grid_n);
        sample.solution[static_cast<int64_t>(i)] = u[i];
    }
    return sample;
}

} // namespace s2f
