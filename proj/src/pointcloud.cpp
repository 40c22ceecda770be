#include "shape2field/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace s2f {

namespace {

double sq_dist(const double* a, const double* b, int64_t d) {
    double s = 0.0;
    for (int64_t t = 0; t < d; ++t) {
        const double diff = a[t] - b[t];
        s += diff * diff;
    }
    return s;
}

} // namespace

int64_t PointCloud::valid_count() const {
    int64_t n = 0;
    for (uint8_t v : valid) {
        n += (v != 0);
    }
    return n;
}

PointCloud make_cloud(Tensor points) {
    check(points.rank() == 2, "point cloud must be [N x d]");
    PointCloud pc;
    pc.valid.assign(static_cast<size_t>(points.dim(0)), 1);
    pc.points = std::move(points);
    return pc;
}

SamplingResult farthest_point_sample(const PointCloud& pc, int64_t n_samples, SamplingInit init,
                                     uint64_t seed, KernelCounters* counters) {
    check(n_samples >= 1, "n_samples must be >= 1");
    const int64_t n = pc.size();
    const int64_t d = pc.point_dim();
    check(static_cast<int64_t>(pc.valid.size()) == n, "validity mask length mismatch");
    const int64_t n_valid = pc.valid_count();
    check(n_valid >= 1, "point cloud has no valid points");

    // Pairwise squared distances, the dominant O(N^2) cost of the kernel.
    std::vector<double> dist2(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n; ++i) {
        const double* pi = pc.points.data.data() + i * d;
        for (int64_t j = 0; j < n; ++j) {
            dist2[static_cast<size_t>(i * n + j)] =
                sq_dist(pi, pc.points.data.data() + j * d, d);
        }
    }
    if (counters != nullptr) {
        counters->fps_distance_evals += n * n;
    }

    int64_t first = -1;
    if (init == SamplingInit::fixed_first_valid) {
        for (int64_t i = 0; i < n; ++i) {
            if (pc.valid[static_cast<size_t>(i)]) {
                first = i;
                break;
            }
        }
    } else {
        std::vector<int64_t> valid_idx;
        valid_idx.reserve(static_cast<size_t>(n_valid));
        for (int64_t i = 0; i < n; ++i) {
            if (pc.valid[static_cast<size_t>(i)]) {
                valid_idx.push_back(i);
            }
        }
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<size_t> pick(0, valid_idx.size() - 1);
        first = valid_idx[pick(rng)];
    }

    std::vector<int64_t> selected;
    selected.reserve(static_cast<size_t>(std::min(n_samples, n_valid)));
    selected.push_back(first);

    // min squared distance from each valid point to the selected set
    std::vector<double> min_d2(static_cast<size_t>(n),
                               std::numeric_limits<double>::infinity());
    auto absorb = [&](int64_t centroid) {
        const double* row = dist2.data() + centroid * n;
        for (int64_t j = 0; j < n; ++j) {
            min_d2[static_cast<size_t>(j)] = std::min(min_d2[static_cast<size_t>(j)], row[j]);
        }
    };
    absorb(first);

    const int64_t unique_target = std::min(n_samples, n_valid);
    while (static_cast<int64_t>(selected.size()) < unique_target) {
        int64_t best = -1;
        double best_d2 = -1.0;
        for (int64_t j = 0; j < n; ++j) {
            if (!pc.valid[static_cast<size_t>(j)]) {
                continue;
            }
            const double dj = min_d2[static_cast<size_t>(j)];
            if (dj > best_d2) {
                best_d2 = dj;
                best = j;
            }
        }
        selected.push_back(best);
        absorb(best);
    }

    // cloud smaller than the request: repeat the selection cyclically
    SamplingResult result;
    result.centroid_indices.reserve(static_cast<size_t>(n_samples));
    for (int64_t i = 0; i < n_samples; ++i) {
        result.centroid_indices.push_back(selected[static_cast<size_t>(i % unique_target)]);
    }
    result.centroids = Tensor({n_samples, d});
    for (int64_t i = 0; i < n_samples; ++i) {
        const double* src = pc.points.data.data() + result.centroid_indices[static_cast<size_t>(i)] * d;
        std::copy(src, src + d, result.centroids.data.data() + i * d);
    }
    return result;
}

GroupedFeatures ball_group(const PointCloud& pc, const SamplingResult& sampling, double radius,
                           int64_t group_size, KernelCounters* counters) {
    check(radius > 0.0, "radius must be positive");
    check(group_size >= 1, "group size must be >= 1");
    const int64_t n = pc.size();
    const int64_t d = pc.point_dim();
    const int64_t n_s = static_cast<int64_t>(sampling.centroid_indices.size());
    const int64_t n_valid = pc.valid_count();
    check(n_valid >= 1, "point cloud has no valid points");

    GroupedFeatures out;
    out.radius = radius;
    out.group_size = group_size;
    out.group_indices.assign(static_cast<size_t>(n_s * group_size), 0);
    out.group_points = Tensor({n_s, group_size, d});

    std::vector<std::pair<double, int64_t>> order; // (squared distance, index)
    for (int64_t g = 0; g < n_s; ++g) {
        const double* center = sampling.centroids.data.data() + g * d;
        order.clear();
        for (int64_t j = 0; j < n; ++j) {
            if (!pc.valid[static_cast<size_t>(j)]) {
                continue;
            }
            order.emplace_back(sq_dist(center, pc.points.data.data() + j * d, d), j);
        }
        if (counters != nullptr) {
            counters->ball_query_distance_evals += n;
        }
        std::sort(order.begin(), order.end());

        // Truncating a ball to the group_size nearest members and padding a
        // deficient ball with the nearest outside points both reduce to one
        // distance-sorted pass: in-ball points are exactly the nearest ones.
        for (int64_t slot = 0; slot < group_size; ++slot) {
            const int64_t pick = slot < static_cast<int64_t>(order.size())
                                     ? order[static_cast<size_t>(slot)].second
                                     : order[0].second; // duplicate the nearest point
            out.group_indices[static_cast<size_t>(g * group_size + slot)] = pick;
            const double* src = pc.points.data.data() + pick * d;
            std::copy(src, src + d, out.group_points.data.data() + (g * group_size + slot) * d);
        }
    }
    return out;
}

KernelCounters complexity_probe(int64_t n_points, int64_t n_samples, uint64_t seed) {
    check(n_points >= 1 && n_samples >= 1, "probe sizes must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Tensor pts({n_points, 2});
    for (double& v : pts.data) {
        v = unit(rng);
    }
    PointCloud pc = make_cloud(std::move(pts));

    KernelCounters counters;
    SamplingResult s =
        farthest_point_sample(pc, n_samples, SamplingInit::fixed_first_valid, 0, &counters);
    ball_group(pc, s, 0.2, 8, &counters);
    return counters;
}

} // namespace s2f
