#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "shape2field/model.hpp"
#include "shape2field/train.hpp"

namespace s2f {

/// Command-level failure with a machine-parsable code; the CLI prints it
/// as a single `error: <CODE>: <message>` line and exits nonzero.
struct CliError : std::runtime_error {
    std::string code;
    CliError(std::string code_, const std::string& msg)
        : std::runtime_error(msg), code(std::move(code_)) {}
};

/// Flat run configuration. Keys mirror the training hyperparameter table
/// rows (batch size, optimizer, initial learning rate, scheduler patience
/// and factor, epochs, split fractions, N_s, N_p, grouping r, attention
/// head and layer counts) plus artifact-specific knobs; defaults are the
/// structured-mesh Poisson column.
struct RunConfig {
    int64_t batch_size = 32;
    std::string optimizer = "adam";
    double initial_learning_rate = 1e-3;
    int scheduler_patience = 40;
    double scheduler_factor = 0.7;
    int64_t epochs = 500;
    double training_dataset = 0.8;
    double testing_dataset = 0.2;
    int64_t n_s = 64;
    int64_t n_p = 18;
    double grouping_r = 0.2;
    int64_t att_heads_decoder = 8;
    int64_t attention_heads_encoder = 8;
    int64_t cross_att_layers_encoder = 1;
    int64_t self_att_layers_encoder = 3;
    int64_t cross_att_layers_decoder = 4;

    int64_t embed_dim = 32;
    int64_t out_channels = 1;
    int freq_levels = 8;
    double clip_norm = 1.0;
    int threads = 0;
    bool extended = false;

    /// Strict parse: any unknown key fails with its name.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
    nlohmann::json to_json() const;
    ModelConfig model_config() const;
};

namespace cmd {

struct GenerateArgs {
    int64_t n_samples = 10;
    int64_t grid_n = 48;
    uint64_t seed = 0;
    double lambda_min = 1.0;
    double lambda_max = 1.0;
    std::string out;
};
void generate(const GenerateArgs& args, std::ostream& log);

struct TrainArgs {
    std::string dataset;
    std::string out_dir;
    RunConfig config;
    uint64_t seed = 0;
    std::optional<uint64_t> split_seed;
    std::string resume_checkpoint; // continue epoch numbering when set
    bool quiet = false;
};
TrainResult train(const TrainArgs& args, std::ostream& log);

struct EvalArgs {
    std::string checkpoint;
    std::string dataset;
    std::string split = "test"; // train | test | all
    std::string out_dir;        // metrics.json + per_sample.csv when set
};
EvalSummary eval(const EvalArgs& args, std::ostream& log);

struct InferArgs {
    std::string checkpoint;
    std::string boundary_csv; // x,y per line
    std::string query_csv;    // x,y per line
    std::string out_csv;      // one predicted row per query
    double load = 1.0;
};
void infer(const InferArgs& args, std::ostream& log);

struct RobustnessArgs {
    std::string checkpoint;
    std::string dataset;
    std::string split = "test";
    std::string out_csv;
    uint64_t seed = 0;
    int64_t max_samples = 0; // 0 = whole split
};
struct RobustnessRow {
    std::string mode;
    double mean_l2 = 0.0;
};
std::vector<RobustnessRow> robustness(const RobustnessArgs& args, std::ostream& log);

} // namespace cmd

} // namespace s2f
