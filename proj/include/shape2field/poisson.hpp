#pragma once

#include "shape2field/stardomain.hpp"
#include "shape2field/tensor.hpp"

namespace s2f {

/// One generated training example: boundary points, interior grid nodes as
/// queries, the solved field at those nodes, and the source scale.
struct PoissonSample {
    Tensor boundary; // [n_b x 2]
    Tensor queries;  // [N_q x 2], strictly inside the boundary
    Tensor solution; // [N_q x 1]
    double load = 1.0;
};

/// Solves -laplace(u) = load on the interior of `domain` with u = 0 on the
/// boundary, discretized with the 5-point stencil on a uniform grid over
/// [-1,1]^2. Nodes outside the polygon act as zero Dirichlet values (first
/// order boundary treatment). Conjugate gradients to relative residual
/// 1e-10. Throws "degenerate domain" when no grid node falls inside.
PoissonSample solve_poisson(const StarDomain& domain, int64_t grid_n, double load);

} // namespace s2f
