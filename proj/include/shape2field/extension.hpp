#pragma once

#include <random>

#include "shape2field/nn.hpp"

namespace s2f {

/// Non-geometric model inputs; currently a single scalar load factor that
/// scales the source term of the generated datasets.
struct ExtraInputs {
    double load = 1.0;
};

struct ExtensionConfig {
    int64_t embed_dim = 32;
    // Hidden widths; empty agg_hidden makes the aggregation a plain linear
    // map, which permits an exact hand-constructed pass-through.
    std::vector<int64_t> extras_hidden = {32};
    std::vector<int64_t> agg_hidden = {32};
};

struct ExtensionWeights {
    Mlp extras_mlp; // 1 -> embed_dim
    Mlp agg_mlp;    // 2*embed_dim -> embed_dim
};

ExtensionWeights make_extension(ParamRegistry& reg, const ExtensionConfig& cfg,
                                std::mt19937_64& rng);

/// Encodes the extra inputs to an embedding row, repeats it across the
/// token axis, concatenates with the geometry tokens along channels and
/// aggregates back to [N_s x d_e].
Value fuse_extras(const Value& geometry_tokens, const ExtraInputs& extras,
                  const ExtensionConfig& cfg, const ExtensionWeights& w);

} // namespace s2f
