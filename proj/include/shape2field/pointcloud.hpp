#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "shape2field/tensor.hpp"

namespace s2f {

/// Padded point set: `points` is [N x d]; valid[i] == 0 marks a padding
/// row that must never influence any downstream selection or attention.
struct PointCloud {
    Tensor points;
    std::vector<uint8_t> valid;

    int64_t size() const { return points.dim(0); }
    int64_t point_dim() const { return points.dim(1); }
    int64_t valid_count() const;
};

PointCloud make_cloud(Tensor points); // all rows valid

struct SamplingResult {
    std::vector<int64_t> centroid_indices; // length N_s, into the cloud
    Tensor centroids;                      // [N_s x d]
};

struct GroupedFeatures {
    std::vector<int64_t> group_indices; // [N_s * N_p], row-major
    Tensor group_points;                // [N_s x N_p x d]
    double radius = 0.0;
    int64_t group_size = 0;
};

/// Per-call instrumentation of the two kernels (distance evaluations).
struct KernelCounters {
    int64_t fps_distance_evals = 0;
    int64_t ball_query_distance_evals = 0;
};

enum class SamplingInit {
    fixed_first_valid,
    seeded_random,
};

/// Greedy max-min farthest point sampling over the valid points, working
/// from a precomputed pairwise distance table. The first centroid is the
/// first valid point, or a seeded uniform draw among valid points. Ties
/// break to the lowest index. When fewer than `n_samples` valid points
/// exist the selected sequence repeats cyclically so the output length is
/// always `n_samples`.
SamplingResult farthest_point_sample(const PointCloud& pc, int64_t n_samples, SamplingInit init,
                                     uint64_t seed = 0, KernelCounters* counters = nullptr);

/// Groups the `group_size` admissible points around each centroid: points
/// within `radius` first, then the nearest valid points outside the ball;
/// the single nearest point is duplicated only when the cloud has fewer
/// than `group_size` valid points. Each group is ordered by ascending
/// distance to its centroid, ties to the lowest index.
GroupedFeatures ball_group(const PointCloud& pc, const SamplingResult& sampling, double radius,
                           int64_t group_size, KernelCounters* counters = nullptr);

/// Runs both instrumented kernels on a seeded synthetic cloud and reports
/// the distance-evaluation counts.
KernelCounters complexity_probe(int64_t n_points, int64_t n_samples, uint64_t seed = 12345);

} // namespace s2f
