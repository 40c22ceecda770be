#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "shape2field/poisson.hpp"

namespace s2f {

/// Per-channel standardization constants; std entries are floored at 1e-8.
struct NormStats {
    std::vector<double> input_mean, input_std;   // per coordinate channel
    std::vector<double> output_mean, output_std; // per field channel

    nlohmann::json to_json() const;
    static NormStats from_json(const nlohmann::json& j);
};

Tensor normalize_columns(const Tensor& t, const std::vector<double>& mean,
                         const std::vector<double>& std);
Tensor denormalize_columns(const Tensor& t, const std::vector<double>& mean,
                           const std::vector<double>& std);

struct Dataset {
    std::vector<PoissonSample> samples;
    NormStats stats;                  // over the canonical training split
    std::vector<int64_t> train_indices; // canonical 80/20 split drawn at generation
    std::vector<int64_t> test_indices;
    nlohmann::json metadata;          // grid_n, seed, lambda range, ...

    int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

struct GenerateOptions {
    int64_t n_samples = 500;
    int64_t grid_n = 48;
    uint64_t seed = 0;
    int64_t n_boundary = 144;
    int n_modes = 6;
    double smoothness = 0.12;
    double lambda_min = 1.0; // lambda_min == lambda_max pins the load to a constant
    double lambda_max = 1.0;
    double train_fraction = 0.8;
};

/// Generates domains and solutions, draws the canonical split and computes
/// normalization statistics over its training part.
Dataset generate_dataset(const GenerateOptions& opt);

NormStats compute_norm_stats(const std::vector<PoissonSample>& samples,
                             const std::vector<int64_t>& indices);

/// Seeded 80/20 index split (shuffle then cut).
void split_indices(int64_t n, double train_fraction, uint64_t seed,
                   std::vector<int64_t>& train, std::vector<int64_t>& test);

void write_dataset(const std::string& base_path, const Dataset& ds);
Dataset read_dataset(const std::string& base_path);

} // namespace s2f
