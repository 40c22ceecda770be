#pragma once

#include <random>

#include "shape2field/frequency.hpp"
#include "shape2field/nn.hpp"
#include "shape2field/pointcloud.hpp"

namespace s2f {

struct EncoderConfig {
    int64_t point_dim = 2;
    int64_t embed_dim = 32;    // d_e; also the channel count of the positional features
    int64_t num_centroids = 64;
    int64_t group_size = 18;
    double group_radius = 0.2;
    int64_t cross_blocks = 1;
    int64_t self_blocks = 3;
    int64_t heads = 8;
    double ln_eps = 1e-5;
    FrequencyEncodingConfig freq;

    int64_t pe_channels() const { return point_dim * freq.channels_per_coord(); }
};

struct EncoderWeights {
    LinearLayer pe_linear; // pe_channels -> embed_dim, shared by the K/V and grouping paths
    Mlp group_mlp;         // (embed_dim + point_dim) -> embed_dim, two hidden layers
    std::vector<AttentionBlock> cross;
    std::vector<AttentionBlock> self_refine;
    LinearLayer final_linear;
};

EncoderWeights make_encoder(ParamRegistry& reg, const EncoderConfig& cfg, std::mt19937_64& rng);

/// Shared per-point MLP over each group followed by a max-pool across the
/// group axis: [N_s x N_p x (C + d)] local neighborhoods -> [N_s x C].
/// `pe_features` are the positional features of the full cloud [N x C].
Value local_feature_extract(const Value& pe_features, const GroupedFeatures& groups,
                            const EncoderConfig& cfg, const EncoderWeights& w);

/// Full geometry encoder: positional features feed both the grouped local
/// path (queries) and the masked global K/V path; cross blocks fuse them,
/// self blocks refine, a final linear map emits the tokens [N_s x d_e].
/// `sampling_out`, when given, receives the FPS result actually used.
Value encode_geometry(const PointCloud& pc, const EncoderConfig& cfg, const EncoderWeights& w,
                      SamplingInit init, uint64_t sample_seed = 0,
                      SamplingResult* sampling_out = nullptr);

} // namespace s2f
