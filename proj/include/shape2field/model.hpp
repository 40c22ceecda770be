#pragma once

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "shape2field/dataset.hpp"
#include "shape2field/decoder.hpp"
#include "shape2field/encoder.hpp"
#include "shape2field/extension.hpp"
#include "shape2field/optim.hpp"

namespace s2f {

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;
    bool extended = false;
    ExtensionConfig extension;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// Geometry encoder + solution decoder (+ optional extra-input fusion)
/// sharing one parameter registry. The model works in normalized
/// coordinate/field space; callers apply NormStats at the boundary.
class Model {
public:
    Model(ModelConfig cfg, uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    ParamRegistry& params() { return reg_; }
    const ParamRegistry& params() const { return reg_; }
    const EncoderWeights& encoder_weights() const { return enc_; }
    const DecoderWeights& decoder_weights() const { return dec_; }
    ExtensionWeights* extension_weights() { return ext_ ? &*ext_ : nullptr; }

    Value encode(const PointCloud& pc, SamplingInit init, uint64_t sample_seed = 0,
                 SamplingResult* sampling_out = nullptr) const;

    /// Full forward pass. `extras` must be present iff the model is
    /// extended... a plain model simply ignores a dataset's load column.
    Value predict(const PointCloud& pc, const QueryBatch& queries, const ExtraInputs* extras,
                  SamplingInit init, uint64_t sample_seed = 0) const;

private:
    ModelConfig cfg_;
    ParamRegistry reg_;
    EncoderWeights enc_;
    DecoderWeights dec_;
    std::optional<ExtensionWeights> ext_;
};

/// Checkpoints reuse the dataset container format: one f64 array per
/// parameter plus optimizer moments, with the model config, normalization
/// stats and training progress in the manifest metadata.
void save_checkpoint(const std::string& base_path, const Model& model, const NormStats& stats,
                     const nlohmann::json& extra, const OptimizerState* opt_state = nullptr);

struct LoadedCheckpoint {
    std::unique_ptr<Model> model;
    NormStats stats;
    nlohmann::json extra;
    std::optional<OptimizerState> opt_state;
    bool identity_oracle = false; // test hook: predictions echo stored targets
};

LoadedCheckpoint load_checkpoint(const std::string& base_path);

/// Writes a parameterless marker checkpoint whose predictions are defined
/// to equal the stored targets (used to validate metric plumbing).
void save_identity_oracle_checkpoint(const std::string& base_path);

} // namespace s2f
