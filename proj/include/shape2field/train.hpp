#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "shape2field/metrics.hpp"
#include "shape2field/model.hpp"

namespace s2f {

/// Deterministic seed derivation (splitmix64 over the combined words);
/// used for epoch shuffles, per-sample FPS seeds and the robustness
/// protocol's perturbations.
uint64_t mix_seed(uint64_t a, uint64_t b);

/// Collated mini-batch: clouds padded to a common N, queries and targets
/// padded to a common N_q (batch maxima, not dataset maxima). Values are
/// already normalized; `loads` carries the per-sample extra input.
struct Batch {
    std::vector<PointCloud> clouds;
    std::vector<QueryBatch> queries;
    std::vector<FieldBatch> targets;
    std::vector<double> loads;

    int64_t size() const { return static_cast<int64_t>(clouds.size()); }
    int64_t valid_query_rows() const;
};

/// Normalized view of one dataset sample, cached once per run.
struct NormalizedSample {
    Tensor boundary;
    Tensor queries;
    Tensor solution;
    double load = 1.0;
};

Batch collate(const std::vector<const NormalizedSample*>& items);

struct TrainOptions {
    int64_t epochs = 500;
    int64_t batch_size = 32;
    double learning_rate = 1e-3;
    int patience = 40;
    double factor = 0.7;
    uint64_t seed = 0;
    double clip_norm = 1.0; // <= 0 disables clipping
    int threads = 0;        // 0: use the hardware concurrency, capped at 8
    std::string run_dir;    // when set: config snapshot, metrics.csv, checkpoints
    std::optional<uint64_t> split_seed; // re-split and recompute stats when set
    double train_fraction = 0.8;
    std::function<void(const struct EpochMetrics&)> on_epoch;
};

struct EpochMetrics {
    int64_t epoch = 0;
    double train_mse = 0.0;
    double val_mse = 0.0;
    double val_l2 = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    double best_val_mse = 0.0;
    int64_t best_epoch = 0;
    NormStats stats;
    std::vector<int64_t> train_indices, test_indices;
};

/// Deterministic epoch loop: seeded shuffles, per-sample FPS seeds, batch
/// gradients merged in sample order, Adam with reduce-on-plateau driven by
/// the validation masked MSE. Checkpoints at best-validation and last
/// epoch when `run_dir` is set. Pass `resume` to continue a run (epoch
/// numbering and optimizer state carry over).
TrainResult train_model(Model& model, const Dataset& ds, const TrainOptions& opt,
                        const LoadedCheckpoint* resume = nullptr);

struct EvalSummary {
    std::vector<double> per_sample_l2; // denormalized field error, one per sample
    double mean_l2 = 0.0;
    double std_l2 = 0.0;
    double median_l2 = 0.0;
    double worst_l2 = 0.0;
};

/// Forward-only evaluation on the given sample indices using the
/// fixed-first-valid sampling init.
EvalSummary evaluate_model(const Model& model, const Dataset& ds,
                           const std::vector<int64_t>& indices, const NormStats& stats,
                           int threads = 0);

/// Evaluation of one (possibly perturbed) cloud/query/target triple given
/// in raw units; returns the denormalized L2 relative error.
double evaluate_sample_l2(const Model& model, const NormStats& stats, const Tensor& boundary,
                          const std::vector<uint8_t>& boundary_valid, const Tensor& queries,
                          const Tensor& solution, double load,
                          SamplingInit init = SamplingInit::fixed_first_valid,
                          uint64_t sample_seed = 0);

int resolve_threads(int requested);

} // namespace s2f
