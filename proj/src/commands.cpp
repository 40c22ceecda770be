#include "shape2field/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace s2f {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h = (h ^ static_cast<uint8_t>(c)) * 1099511628211ULL;
    }
    return h;
}

void assign_field(RunConfig& c, const std::string& key, const nlohmann::json& v) {
    try {
        if (key == "batch_size") {
            c.batch_size = v.get<int64_t>();
        } else if (key == "optimizer") {
            c.optimizer = v.get<std::string>();
        } else if (key == "initial_learning_rate") {
            c.initial_learning_rate = v.get<double>();
        } else if (key == "scheduler_patience") {
            c.scheduler_patience = v.get<int>();
        } else if (key == "scheduler_factor") {
            c.scheduler_factor = v.get<double>();
        } else if (key == "epochs") {
            c.epochs = v.get<int64_t>();
        } else if (key == "training_dataset") {
            c.training_dataset = v.get<double>();
        } else if (key == "testing_dataset") {
            c.testing_dataset = v.get<double>();
        } else if (key == "n_s") {
            c.n_s = v.get<int64_t>();
        } else if (key == "n_p") {
            c.n_p = v.get<int64_t>();
        } else if (key == "grouping_r") {
            c.grouping_r = v.get<double>();
        } else if (key == "att_heads_decoder") {
            c.att_heads_decoder = v.get<int64_t>();
        } else if (key == "attention_heads_encoder") {
            c.attention_heads_encoder = v.get<int64_t>();
        } else if (key == "cross_att_layers_encoder") {
            c.cross_att_layers_encoder = v.get<int64_t>();
        } else if (key == "self_att_layers_encoder") {
            c.self_att_layers_encoder = v.get<int64_t>();
        } else if (key == "cross_att_layers_decoder") {
            c.cross_att_layers_decoder = v.get<int64_t>();
        } else if (key == "embed_dim") {
            c.embed_dim = v.get<int64_t>();
        } else if (key == "out_channels") {
            c.out_channels = v.get<int64_t>();
        } else if (key == "freq_levels") {
            c.freq_levels = v.get<int>();
        } else if (key == "clip_norm") {
            c.clip_norm = v.get<double>();
        } else if (key == "threads") {
            c.threads = v.get<int>();
        } else if (key == "extended") {
            c.extended = v.get<bool>();
        } else {
            throw CliError("E_CONFIG", "unknown config field: " + key);
        }
    } catch (const nlohmann::json::exception&) {
        throw CliError("E_CONFIG", "bad value for config field: " + key);
    }
}

std::vector<int64_t> split_of(const Dataset& ds, const std::string& split) {
    if (split == "train") {
        return ds.train_indices;
    }
    if (split == "test") {
        return ds.test_indices;
    }
    if (split == "all") {
        std::vector<int64_t> all(static_cast<size_t>(ds.size()));
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    throw CliError("E_BADARG", "unknown split: " + split + " (want train|test|all)");
}

Dataset load_dataset_checked(const std::string& path) {
    try {
        return read_dataset(path);
    } catch (const std::exception& ex) {
        throw CliError("E_IO", std::string("cannot read dataset: ") + ex.what());
    }
}

LoadedCheckpoint load_checkpoint_checked(const std::string& path) {
    try {
        return load_checkpoint(path);
    } catch (const std::exception& ex) {
        throw CliError("E_IO", std::string("cannot read checkpoint: ") + ex.what());
    }
}

Tensor read_xy_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw CliError("E_IO", "cannot open " + path);
    }
    std::vector<double> values;
    std::string line;
    int64_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        std::string cell;
        int got = 0;
        while (std::getline(ls, cell, ',') && got < 2) {
            try {
                values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw CliError("E_BADARG", path + ": not a number: '" + cell + "'");
            }
            ++got;
        }
        if (got != 2) {
            throw CliError("E_BADARG", path + ": expected two columns per line");
        }
        ++rows;
    }
    if (rows == 0) {
        throw CliError("E_BADARG", path + ": no points");
    }
    return Tensor::from({rows, 2}, std::move(values));
}

/// Applies a seeded permutation and keeps the first `keep` rows.
Tensor shuffled_prefix(const Tensor& points, uint64_t seed, int64_t keep) {
    const int64_t n = points.dim(0), d = points.dim(1);
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor out({keep, d});
    for (int64_t i = 0; i < keep; ++i) {
        const double* src = points.data.data() + perm[static_cast<size_t>(i)] * d;
        std::copy(src, src + d, out.data.data() + i * d);
    }
    return out;
}

} // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    check(j.is_object(), "config must be a flat object");
    RunConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        assign_field(c, it.key(), it.value());
    }
    if (c.optimizer != "adam") {
        throw CliError("E_CONFIG", "unsupported optimizer: " + c.optimizer);
    }
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw CliError("E_IO", "cannot open config " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw CliError("E_CONFIG", "config parse error: " + std::string(ex.what()));
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    return {
        {"batch_size", batch_size},
        {"optimizer", optimizer},
        {"initial_learning_rate", initial_learning_rate},
        {"scheduler_patience", scheduler_patience},
        {"scheduler_factor", scheduler_factor},
        {"epochs", epochs},
        {"training_dataset", training_dataset},
        {"testing_dataset", testing_dataset},
        {"n_s", n_s},
        {"n_p", n_p},
        {"grouping_r", grouping_r},
        {"att_heads_decoder", att_heads_decoder},
        {"attention_heads_encoder", attention_heads_encoder},
        {"cross_att_layers_encoder", cross_att_layers_encoder},
        {"self_att_layers_encoder", self_att_layers_encoder},
        {"cross_att_layers_decoder", cross_att_layers_decoder},
        {"embed_dim", embed_dim},
        {"out_channels", out_channels},
        {"freq_levels", freq_levels},
        {"clip_norm", clip_norm},
        {"threads", threads},
        {"extended", extended},
    };
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.encoder.embed_dim = embed_dim;
    m.encoder.num_centroids = n_s;
    m.encoder.group_size = n_p;
    m.encoder.group_radius = grouping_r;
    m.encoder.cross_blocks = cross_att_layers_encoder;
    m.encoder.self_blocks = self_att_layers_encoder;
    m.encoder.heads = attention_heads_encoder;
    m.encoder.freq.num_frequencies = freq_levels;
    m.decoder.embed_dim = embed_dim;
    m.decoder.cross_blocks = cross_att_layers_decoder;
    m.decoder.heads = att_heads_decoder;
    m.decoder.out_channels = out_channels;
    m.decoder.freq.num_frequencies = freq_levels;
    m.extended = extended;
    m.extension.embed_dim = embed_dim;
    m.extension.extras_hidden = {embed_dim};
    m.extension.agg_hidden = {embed_dim};
    return m;
}

namespace cmd {

void generate(const GenerateArgs& args, std::ostream& log) {
    if (args.out.empty()) {
        throw CliError("E_BADARG", "generate needs --out");
    }
    GenerateOptions opt;
    opt.n_samples = args.n_samples;
    opt.grid_n = args.grid_n;
    opt.seed = args.seed;
    opt.lambda_min = args.lambda_min;
    opt.lambda_max = args.lambda_max;

    Dataset ds = generate_dataset(opt);
    try {
        write_dataset(args.out, ds);
    } catch (const std::exception& ex) {
        throw CliError("E_IO", std::string("cannot write dataset: ") + ex.what());
    }

    if (ds.size() == 0) {
        log << "warning: wrote an empty dataset\n";
        log << "samples: 0\n";
        return;
    }
    int64_t qmin = std::numeric_limits<int64_t>::max(), qmax = 0;
    for (const auto& s : ds.samples) {
        qmin = std::min(qmin, s.queries.dim(0));
        qmax = std::max(qmax, s.queries.dim(0));
    }
    log << "samples: " << ds.size() << "\n";
    log << "boundary points per sample: " << ds.samples.front().boundary.dim(0) << "\n";
    log << "query points per sample: [" << qmin << "," << qmax << "]\n";
    log << "wrote " << args.out << ".json / .bin\n";
}

TrainResult train(const TrainArgs& args, std::ostream& log) {
    Dataset ds = load_dataset_checked(args.dataset);
    if (ds.size() < 2) {
        throw CliError("E_BADARG", "dataset too small to train on");
    }

    std::unique_ptr<Model> model;
    LoadedCheckpoint resume;
    if (!args.resume_checkpoint.empty()) {
        resume = load_checkpoint_checked(args.resume_checkpoint);
        if (resume.model == nullptr) {
            throw CliError("E_BADARG", "cannot resume from an identity-oracle checkpoint");
        }
        model = std::move(resume.model);
    } else {
        model = std::make_unique<Model>(args.config.model_config(), mix_seed(args.seed, 0xA11));
    }

    TrainOptions opt;
    opt.epochs = args.config.epochs;
    opt.batch_size = args.config.batch_size;
    opt.learning_rate = args.config.initial_learning_rate;
    opt.patience = args.config.scheduler_patience;
    opt.factor = args.config.scheduler_factor;
    opt.seed = args.seed;
    opt.clip_norm = args.config.clip_norm;
    opt.threads = args.config.threads;
    opt.run_dir = args.out_dir;
    opt.split_seed = args.split_seed;
    opt.train_fraction = args.config.training_dataset;
    if (!args.quiet) {
        opt.on_epoch = [&log](const EpochMetrics& em) {
            log << "epoch " << em.epoch << " train_mse " << em.train_mse << " val_mse "
                << em.val_mse << " val_l2 " << em.val_l2 << " lr " << em.learning_rate << "\n";
        };
    }

    if (!args.out_dir.empty()) {
        std::filesystem::create_directories(args.out_dir);
        std::ofstream(args.out_dir + "/run_config.json") << args.config.to_json().dump(2) << "\n";
    }
    return train_model(*model, ds, opt,
                       args.resume_checkpoint.empty() ? nullptr : &resume);
}

EvalSummary eval(const EvalArgs& args, std::ostream& log) {
    Dataset ds = load_dataset_checked(args.dataset);
    const std::vector<int64_t> indices = split_of(ds, args.split);
    if (indices.empty()) {
        throw CliError("E_BADARG", "selected split is empty");
    }
    LoadedCheckpoint ckpt = load_checkpoint_checked(args.checkpoint);

    EvalSummary summary;
    if (ckpt.identity_oracle) {
        // predictions are defined to equal the stored targets
        summary.per_sample_l2.assign(indices.size(), 0.0);
    } else {
        summary = evaluate_model(*ckpt.model, ds, indices, ckpt.stats);
    }
    if (!summary.per_sample_l2.empty() && ckpt.identity_oracle) {
        summary.mean_l2 = summary.std_l2 = summary.median_l2 = summary.worst_l2 = 0.0;
    }

    log << "split: " << args.split << " (" << indices.size() << " samples)\n";
    log << "mean_l2: " << summary.mean_l2 << "\n";
    log << "std_l2: " << summary.std_l2 << "\n";
    log << "median_l2: " << summary.median_l2 << "\n";
    log << "worst_l2: " << summary.worst_l2 << "\n";

    if (!args.out_dir.empty()) {
        std::filesystem::create_directories(args.out_dir);
        nlohmann::json mj = {{"split", args.split},
                             {"samples", indices.size()},
                             {"mean_l2", summary.mean_l2},
                             {"std_l2", summary.std_l2},
                             {"median_l2", summary.median_l2},
                             {"worst_l2", summary.worst_l2}};
        std::ofstream(args.out_dir + "/metrics.json") << mj.dump(2) << "\n";
        std::ofstream csv(args.out_dir + "/per_sample.csv");
        csv << "sample_index,n_queries,l2\n";
        for (size_t i = 0; i < indices.size(); ++i) {
            csv << indices[i] << ","
                << ds.samples[static_cast<size_t>(indices[i])].queries.dim(0) << ","
                << summary.per_sample_l2[i] << "\n";
        }
    }
    return summary;
}

void infer(const InferArgs& args, std::ostream& log) {
    LoadedCheckpoint ckpt = load_checkpoint_checked(args.checkpoint);
    if (ckpt.identity_oracle) {
        throw CliError("E_BADARG", "identity-oracle checkpoints cannot infer on new points");
    }
    Tensor boundary = read_xy_csv(args.boundary_csv);
    Tensor queries = read_xy_csv(args.query_csv);

    PointCloud pc;
    pc.points = normalize_columns(boundary, ckpt.stats.input_mean, ckpt.stats.input_std);
    pc.valid.assign(static_cast<size_t>(boundary.dim(0)), 1);
    QueryBatch q =
        make_queries(normalize_columns(queries, ckpt.stats.input_mean, ckpt.stats.input_std));
    ExtraInputs extras{args.load};
    Value pred = ckpt.model->predict(pc, q, ckpt.model->config().extended ? &extras : nullptr,
                                     SamplingInit::fixed_first_valid);
    Tensor out = denormalize_columns(pred->value, ckpt.stats.output_mean, ckpt.stats.output_std);

    std::ofstream csv(args.out_csv);
    if (!csv) {
        throw CliError("E_IO", "cannot open " + args.out_csv + " for writing");
    }
    const int64_t c = out.dim(1);
    csv.precision(17);
    for (int64_t i = 0; i < out.dim(0); ++i) {
        for (int64_t j = 0; j < c; ++j) {
            csv << out[i * c + j] << (j + 1 < c ? "," : "");
        }
        csv << "\n";
    }
    log << "wrote " << out.dim(0) << " predictions to " << args.out_csv << "\n";
}

std::vector<RobustnessRow> robustness(const RobustnessArgs& args, std::ostream& log) {
    LoadedCheckpoint ckpt = load_checkpoint_checked(args.checkpoint);
    if (ckpt.identity_oracle) {
        throw CliError("E_BADARG", "robustness needs a trained checkpoint");
    }
    Dataset ds = load_dataset_checked(args.dataset);
    std::vector<int64_t> indices = split_of(ds, args.split);
    if (args.max_samples > 0 && static_cast<int64_t>(indices.size()) > args.max_samples) {
        indices.resize(static_cast<size_t>(args.max_samples));
    }
    if (indices.empty()) {
        throw CliError("E_BADARG", "selected split is empty");
    }

    // The four point-order/padding variants, then the density sweep.
    struct Mode {
        std::string name;
        double density = 1.0; // fraction of points kept (after a shuffle)
        bool shuffle = false;
        bool pad = false;
    };
    std::vector<Mode> modes = {
        {"original", 1.0, false, false},
        {"shuffled", 1.0, true, false},
        {"shuffled_80", 0.8, true, false},
        {"padded", 1.0, false, true},
        {"shuffled_padded", 1.0, true, true},
        {"density_100", 1.0, false, false},
        {"density_80", 0.8, true, false},
        {"density_60", 0.6, true, false},
        {"density_40", 0.4, true, false},
        {"density_20", 0.2, true, false},
    };

    std::vector<RobustnessRow> rows;
    for (const auto& mode : modes) {
        if (mode.density <= 0.0) {
            throw CliError("E_BADARG", "density must be positive");
        }
        double sum = 0.0;
        for (size_t si = 0; si < indices.size(); ++si) {
            const PoissonSample& s = ds.samples[static_cast<size_t>(indices[si])];
            const int64_t n = s.boundary.dim(0);
            const int64_t keep =
                std::max<int64_t>(1, static_cast<int64_t>(std::llround(
                                         mode.density * static_cast<double>(n))));
            Tensor pts = s.boundary;
            if (mode.shuffle || keep < n) {
                pts = shuffled_prefix(
                    s.boundary, mix_seed(args.seed, 7777 + si * 31 + fnv1a(mode.name)), keep);
            }
            std::vector<uint8_t> valid(static_cast<size_t>(pts.dim(0)), 1);
            if (mode.pad) {
                // pad with as many masked rows as there are real points; the
                // sentinel coordinate is irrelevant by construction
                const int64_t m = pts.dim(0);
                Tensor padded({2 * m, 2});
                std::copy(pts.data.begin(), pts.data.end(), padded.data.begin());
                for (int64_t i = m; i < 2 * m; ++i) {
                    padded[i * 2] = -1000.0;
                    padded[i * 2 + 1] = -1000.0;
                }
                valid.assign(static_cast<size_t>(2 * m), 0);
                std::fill(valid.begin(), valid.begin() + m, 1);
                if (mode.shuffle) {
                    // shuffle rows and mask together
                    std::vector<int64_t> perm(static_cast<size_t>(2 * m));
                    std::iota(perm.begin(), perm.end(), 0);
                    std::mt19937_64 rng(mix_seed(args.seed, 9999 + si));
                    std::shuffle(perm.begin(), perm.end(), rng);
                    Tensor shuffled({2 * m, 2});
                    std::vector<uint8_t> shuffled_valid(static_cast<size_t>(2 * m));
                    for (int64_t i = 0; i < 2 * m; ++i) {
                        const int64_t p = perm[static_cast<size_t>(i)];
                        shuffled[i * 2] = padded[p * 2];
                        shuffled[i * 2 + 1] = padded[p * 2 + 1];
                        shuffled_valid[static_cast<size_t>(i)] =
                            valid[static_cast<size_t>(p)];
                    }
                    padded = std::move(shuffled);
                    valid = std::move(shuffled_valid);
                }
                pts = std::move(padded);
            }
            sum += evaluate_sample_l2(*ckpt.model, ckpt.stats, pts, valid, s.queries, s.solution,
                                      s.load);
        }
        rows.push_back({mode.name, sum / static_cast<double>(indices.size())});
        log << mode.name << " mean_l2 " << rows.back().mean_l2 << "\n";
    }

    if (!args.out_csv.empty()) {
        std::ofstream csv(args.out_csv);
        if (!csv) {
            throw CliError("E_IO", "cannot open " + args.out_csv + " for writing");
        }
        csv << "mode,mean_l2\n";
        for (const auto& r : rows) {
            csv << r.mode << "," << r.mean_l2 << "\n";
        }
    }
    return rows;
}

} // namespace cmd

} // namespace s2f
