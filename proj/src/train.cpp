#include "shape2field/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace s2f {

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<int64_t> next(0);
    std::vector<std::thread> pool;
    const int n_workers = static_cast<int>(std::min<int64_t>(threads, n));
    pool.reserve(static_cast<size_t>(n_workers));
    std::atomic<bool> failed(false);
    std::string error_message;
    std::mutex error_mutex;
    for (int t = 0; t < n_workers; ++t) {
        pool.emplace_back([&]() {
            for (int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                if (failed.load()) {
                    return;
                }
                try {
                    fn(i);
                } catch (const std::exception& ex) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    failed.store(true);
                    error_message = ex.what();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (failed.load()) {
        throw std::runtime_error(error_message);
    }
}

NormalizedSample normalize_sample(const PoissonSample& s, const NormStats& stats) {
    NormalizedSample out;
    out.boundary = normalize_columns(s.boundary, stats.input_mean, stats.input_std);
    out.queries = normalize_columns(s.queries, stats.input_mean, stats.input_std);
    out.solution = normalize_columns(s.solution, stats.output_mean, stats.output_std);
    out.load = s.load;
    return out;
}

Tensor pad_rows(const Tensor& t, int64_t target_rows) {
    const int64_t rows = t.dim(0), c = t.dim(1);
    if (rows == target_rows) {
        return t;
    }
    Tensor out({target_rows, c});
    std::copy(t.data.begin(), t.data.end(), out.data.begin());
    return out;
}

std::vector<uint8_t> pad_mask(int64_t valid_rows, int64_t target_rows) {
    std::vector<uint8_t> m(static_cast<size_t>(target_rows), 0);
    std::fill(m.begin(), m.begin() + valid_rows, 1);
    return m;
}

double global_grad_norm(const std::vector<Tensor>& grads) {
    double s = 0.0;
    for (const Tensor& g : grads) {
        for (double v : g.data) {
            s += v * v;
        }
    }
    return std::sqrt(s);
}

} // namespace

int resolve_threads(int requested) {
    if (requested > 0) {
        return requested;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(8u, hw == 0 ? 1u : hw));
}

int64_t Batch::valid_query_rows() const {
    int64_t total = 0;
    for (const auto& q : queries) {
        for (uint8_t v : q.valid) {
            total += (v != 0);
        }
    }
    return total;
}

Batch collate(const std::vector<const NormalizedSample*>& items) {
    check(!items.empty(), "empty batch");
    int64_t max_n = 0, max_q = 0;
    for (const auto* s : items) {
        max_n = std::max(max_n, s->boundary.dim(0));
        max_q = std::max(max_q, s->queries.dim(0));
    }
    Batch b;
    for (const auto* s : items) {
        PointCloud pc;
        pc.points = pad_rows(s->boundary, max_n);
        pc.valid = pad_mask(s->boundary.dim(0), max_n);
        b.clouds.push_back(std::move(pc));

        QueryBatch q;
        q.points = pad_rows(s->queries, max_q);
        q.valid = pad_mask(s->queries.dim(0), max_q);
        b.queries.push_back(std::move(q));

        FieldBatch f;
        f.values = pad_rows(s->solution, max_q);
        f.valid = b.queries.back().valid;
        b.targets.push_back(std::move(f));

        b.loads.push_back(s->load);
    }
    return b;
}

TrainResult train_model(Model& model, const Dataset& ds, const TrainOptions& opt,
                        const LoadedCheckpoint* resume) {
    check(ds.size() >= 2, "training needs at least 2 samples");
    check(opt.batch_size >= 1, "batch size must be >= 1");

    TrainResult result;
    if (opt.split_seed.has_value()) {
        split_indices(ds.size(), opt.train_fraction, *opt.split_seed, result.train_indices,
                      result.test_indices);
        result.stats = compute_norm_stats(ds.samples, result.train_indices);
    } else {
        result.train_indices = ds.train_indices;
        result.test_indices = ds.test_indices;
        result.stats = ds.stats;
    }
    check(!result.train_indices.empty(), "empty training split");
    check(!result.test_indices.empty(), "empty validation split");

    std::vector<NormalizedSample> normalized;
    normalized.reserve(static_cast<size_t>(ds.size()));
    for (const auto& s : ds.samples) {
        normalized.push_back(normalize_sample(s, result.stats));
    }

    const int threads = resolve_threads(opt.threads);
    const auto& plist = model.params().all();
    const size_t n_params = plist.size();
    const bool extended = model.config().extended;

    OptimizerState opt_state =
        make_optimizer(model.params(), opt.learning_rate, opt.patience, opt.factor);
    int64_t start_epoch = 0;
    if (resume != nullptr && resume->opt_state.has_value()) {
        opt_state = *resume->opt_state;
        start_epoch = resume->extra.value("epoch", 0);
    }

    std::ofstream metrics_file;
    if (!opt.run_dir.empty()) {
        std::filesystem::create_directories(opt.run_dir);
        nlohmann::json snapshot;
        snapshot["model"] = model.config().to_json();
        snapshot["epochs"] = opt.epochs;
        snapshot["batch_size"] = opt.batch_size;
        snapshot["initial_learning_rate"] = opt.learning_rate;
        snapshot["scheduler_patience"] = opt.patience;
        snapshot["scheduler_factor"] = opt.factor;
        snapshot["seed"] = opt.seed;
        snapshot["clip_norm"] = opt.clip_norm;
        snapshot["train_indices"] = result.train_indices;
        snapshot["test_indices"] = result.test_indices;
        snapshot["norm_stats"] = result.stats.to_json();
        std::ofstream(opt.run_dir + "/config.json") << snapshot.dump(2) << "\n";

        const bool append = start_epoch > 0;
        metrics_file.open(opt.run_dir + "/metrics.csv",
                          append ? std::ios::app : std::ios::trunc);
        if (!append) {
            metrics_file << "epoch,train_mse,val_mse,val_l2,lr\n";
        }
    }

    // scratch space reused every batch: one gradient vector per sample slot
    std::vector<std::vector<Tensor>> sample_grads(static_cast<size_t>(opt.batch_size));
    std::vector<double> sample_losses(static_cast<size_t>(opt.batch_size));

    result.best_val_mse = std::numeric_limits<double>::infinity();
    result.best_epoch = -1;

    std::vector<int64_t> order = result.train_indices;
    for (int64_t epoch = start_epoch; epoch < opt.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(mix_seed(opt.seed, 0x5151ULL + static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double train_mse_sum = 0.0;
        int64_t n_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(opt.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(opt.batch_size));
            std::vector<const NormalizedSample*> items;
            items.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                items.push_back(&normalized[static_cast<size_t>(order[i])]);
            }
            Batch batch = collate(items);
            const double inv_denom = 1.0 / (1.0 + static_cast<double>(batch.valid_query_rows()));

            parallel_for(batch.size(), threads, [&](int64_t bi) {
                const uint64_t fps_seed =
                    mix_seed(opt.seed, static_cast<uint64_t>(epoch) * 1000003ULL +
                                           static_cast<uint64_t>(order[start + static_cast<size_t>(bi)]));
                ExtraInputs extras{batch.loads[static_cast<size_t>(bi)]};
                Value pred = model.predict(batch.clouds[static_cast<size_t>(bi)],
                                           batch.queries[static_cast<size_t>(bi)],
                                           extended ? &extras : nullptr,
                                           SamplingInit::seeded_random, fps_seed);
                Value loss = masked_sse_loss(pred, batch.targets[static_cast<size_t>(bi)].values,
                                             batch.targets[static_cast<size_t>(bi)].valid,
                                             inv_denom);
                sample_losses[static_cast<size_t>(bi)] = loss->value.item();

                GradTable table = backward_table(loss);
                auto& grads = sample_grads[static_cast<size_t>(bi)];
                grads.clear();
                grads.reserve(n_params);
                for (const auto& p : plist) {
                    auto it = table.find(p.node.get());
                    if (it == table.end()) {
                        grads.emplace_back(p.node->value.shape);
                    } else {
                        grads.push_back(std::move(it->second));
                    }
                }
            });

            double batch_loss = 0.0;
            std::vector<Tensor> merged;
            merged.reserve(n_params);
            for (const auto& p : plist) {
                merged.emplace_back(p.node->value.shape);
            }
            for (int64_t bi = 0; bi < batch.size(); ++bi) {
                batch_loss += sample_losses[static_cast<size_t>(bi)];
                const auto& grads = sample_grads[static_cast<size_t>(bi)];
                for (size_t pi = 0; pi < n_params; ++pi) {
                    Tensor& dst = merged[pi];
                    const Tensor& src = grads[pi];
                    for (size_t j = 0; j < dst.data.size(); ++j) {
                        dst.data[j] += src.data[j];
                    }
                }
            }

            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                         ", batch " + std::to_string(n_batches + 1));
            }

            if (opt.clip_norm > 0.0) {
                const double norm = global_grad_norm(merged);
                if (norm > opt.clip_norm) {
                    const double s = opt.clip_norm / norm;
                    for (Tensor& g : merged) {
                        for (double& v : g.data) {
                            v *= s;
                        }
                    }
                }
            }
            adam_step(opt_state, model.params(), merged);
            train_mse_sum += batch_loss;
            n_batches += 1;
        }

        // validation: deterministic fixed-init sampling, masked MSE in
        // normalized units plus denormalized relative L2
        double val_mse_sum = 0.0;
        int64_t val_batches = 0;
        std::vector<double> val_l2(result.test_indices.size(), 0.0);
        for (size_t start = 0; start < result.test_indices.size();
             start += static_cast<size_t>(opt.batch_size)) {
            const size_t end =
                std::min(result.test_indices.size(), start + static_cast<size_t>(opt.batch_size));
            std::vector<const NormalizedSample*> items;
            for (size_t i = start; i < end; ++i) {
                items.push_back(&normalized[static_cast<size_t>(result.test_indices[i])]);
            }
            Batch batch = collate(items);
            const double inv_denom = 1.0 / (1.0 + static_cast<double>(batch.valid_query_rows()));
            std::vector<double> losses(static_cast<size_t>(batch.size()));
            parallel_for(batch.size(), threads, [&](int64_t bi) {
                const size_t global_i = start + static_cast<size_t>(bi);
                const int64_t sample_idx = result.test_indices[global_i];
                ExtraInputs extras{batch.loads[static_cast<size_t>(bi)]};
                Value pred = model.predict(batch.clouds[static_cast<size_t>(bi)],
                                           batch.queries[static_cast<size_t>(bi)],
                                           extended ? &extras : nullptr,
                                           SamplingInit::fixed_first_valid);
                losses[static_cast<size_t>(bi)] =
                    masked_sse_loss(pred, batch.targets[static_cast<size_t>(bi)].values,
                                    batch.targets[static_cast<size_t>(bi)].valid, inv_denom)
                        ->value.item();

                // padding rows sit at the tail, so the real predictions are
                // the first nq rows
                const PoissonSample& raw = ds.samples[static_cast<size_t>(sample_idx)];
                const int64_t nq = raw.queries.dim(0);
                Tensor pred_valid({nq, model.config().decoder.out_channels});
                std::copy(pred->value.data.begin(),
                          pred->value.data.begin() + pred_valid.numel(),
                          pred_valid.data.begin());
                Tensor denorm = denormalize_columns(pred_valid, result.stats.output_mean,
                                                    result.stats.output_std);
                val_l2[global_i] = l2_relative_error(
                    denorm, raw.solution, std::vector<uint8_t>(static_cast<size_t>(nq), 1));
            });
            for (double l : losses) {
                val_mse_sum += l;
            }
            val_batches += 1;
        }

        EpochMetrics em;
        em.epoch = epoch + 1;
        em.train_mse = train_mse_sum / static_cast<double>(std::max<int64_t>(1, n_batches));
        em.val_mse = val_mse_sum / static_cast<double>(std::max<int64_t>(1, val_batches));
        em.val_l2 = std::accumulate(val_l2.begin(), val_l2.end(), 0.0) /
                    static_cast<double>(val_l2.size());
        em.learning_rate = opt_state.learning_rate;
        result.history.push_back(em);
        if (metrics_file.is_open()) {
            metrics_file << em.epoch << "," << em.train_mse << "," << em.val_mse << ","
                         << em.val_l2 << "," << em.learning_rate << "\n";
            metrics_file.flush();
        }
        if (opt.on_epoch) {
            opt.on_epoch(em);
        }

        if (em.val_mse < result.best_val_mse) {
            result.best_val_mse = em.val_mse;
            result.best_epoch = em.epoch;
            if (!opt.run_dir.empty()) {
                save_checkpoint(opt.run_dir + "/checkpoint_best", model, result.stats,
                                {{"epoch", em.epoch}, {"val_mse", em.val_mse}}, &opt_state);
            }
        }
        plateau_schedule(opt_state, em.val_mse);

        if (!opt.run_dir.empty()) {
            save_checkpoint(opt.run_dir + "/checkpoint_last", model, result.stats,
                            {{"epoch", em.epoch}, {"val_mse", em.val_mse}}, &opt_state);
        }
    }
    return result;
}

double evaluate_sample_l2(const Model& model, const NormStats& stats, const Tensor& boundary,
                          const std::vector<uint8_t>& boundary_valid, const Tensor& queries,
                          const Tensor& solution, double load, SamplingInit init,
                          uint64_t sample_seed) {
    PointCloud pc;
    pc.points = normalize_columns(boundary, stats.input_mean, stats.input_std);
    pc.valid = boundary_valid;

    QueryBatch q = make_queries(normalize_columns(queries, stats.input_mean, stats.input_std));
    ExtraInputs extras{load};
    Value pred = model.predict(pc, q, model.config().extended ? &extras : nullptr, init,
                               sample_seed);
    Tensor denorm = denormalize_columns(pred->value, stats.output_mean, stats.output_std);
    return l2_relative_error(denorm, solution,
                             std::vector<uint8_t>(static_cast<size_t>(queries.dim(0)), 1));
}

EvalSummary evaluate_model(const Model& model, const Dataset& ds,
                           const std::vector<int64_t>& indices, const NormStats& stats,
                           int threads) {
    EvalSummary summary;
    summary.per_sample_l2.resize(indices.size(), 0.0);
    parallel_for(static_cast<int64_t>(indices.size()), resolve_threads(threads), [&](int64_t i) {
        const PoissonSample& s = ds.samples[static_cast<size_t>(indices[static_cast<size_t>(i)])];
        summary.per_sample_l2[static_cast<size_t>(i)] = evaluate_sample_l2(
            model, stats, s.boundary,
            std::vector<uint8_t>(static_cast<size_t>(s.boundary.dim(0)), 1), s.queries,
            s.solution, s.load);
    });

    if (!summary.per_sample_l2.empty()) {
        std::vector<double> sorted = summary.per_sample_l2;
        std::sort(sorted.begin(), sorted.end());
        const double n = static_cast<double>(sorted.size());
        summary.mean_l2 = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
        double var = 0.0;
        for (double v : sorted) {
            var += (v - summary.mean_l2) * (v - summary.mean_l2);
        }
        summary.std_l2 = std::sqrt(var / n);
        summary.median_l2 = sorted[sorted.size() / 2];
        summary.worst_l2 = sorted.back();
    }
    return summary;
}

} // namespace s2f
