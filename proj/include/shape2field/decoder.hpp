#pragma once

#include <random>

#include "shape2field/frequency.hpp"
#include "shape2field/nn.hpp"

namespace s2f {

/// Padded query coordinates; padding rows still produce outputs but are
/// excluded from losses and metrics by the mask.
struct QueryBatch {
    Tensor points; // [N_q x d]
    std::vector<uint8_t> valid;

    int64_t size() const { return points.dim(0); }
};

QueryBatch make_queries(Tensor points); // all rows valid

/// Per-query field values sharing the query mask.
struct FieldBatch {
    Tensor values; // [N_q x out_channels]
    std::vector<uint8_t> valid;
};

struct DecoderConfig {
    int64_t point_dim = 2;
    int64_t embed_dim = 32;
    int64_t cross_blocks = 4;
    int64_t heads = 8;
    int64_t out_channels = 1;
    double ln_eps = 1e-5;
    FrequencyEncodingConfig freq;

    int64_t pe_channels() const { return point_dim * freq.channels_per_coord(); }
};

struct DecoderWeights {
    Mlp query_mlp; // pe_channels -> embed_dim
    std::vector<AttentionBlock> cross;
    Mlp out_mlp;   // embed_dim -> out_channels, two hidden layers
};

DecoderWeights make_decoder(ParamRegistry& reg, const DecoderConfig& cfg, std::mt19937_64& rng);

/// Maps query coordinates to field values [N_q x out_channels], with every
/// cross block attending over the same geometry tokens (no key mask; all
/// tokens are real). Each output row depends only on its own coordinates
/// and the tokens: there is no attention among queries.
Value decode(const QueryBatch& queries, const Value& geometry_tokens, const DecoderConfig& cfg,
             const DecoderWeights& w);

} // namespace s2f
