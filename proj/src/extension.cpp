#include "shape2field/extension.hpp"

#include <cmath>

namespace s2f {

namespace {

std::vector<int64_t> mlp_dims(int64_t in, const std::vector<int64_t>& hidden, int64_t out) {
    std::vector<int64_t> dims;
    dims.push_back(in);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

} // namespace

ExtensionWeights make_extension(ParamRegistry& reg, const ExtensionConfig& cfg,
                                std::mt19937_64& rng) {
    ExtensionWeights w;
    w.extras_mlp =
        make_mlp(reg, "ext.extras_mlp", mlp_dims(1, cfg.extras_hidden, cfg.embed_dim), rng);
    w.agg_mlp = make_mlp(reg, "ext.agg_mlp",
                         mlp_dims(2 * cfg.embed_dim, cfg.agg_hidden, cfg.embed_dim), rng);
    return w;
}

Value fuse_extras(const Value& geometry_tokens, const ExtraInputs& extras,
                  const ExtensionConfig& cfg, const ExtensionWeights& w) {
    check(std::isfinite(extras.load), "load must be finite");
    check(geometry_tokens->value.rank() == 2 && geometry_tokens->value.dim(1) == cfg.embed_dim,
          "geometry tokens shape mismatch");
    const int64_t n_s = geometry_tokens->value.dim(0);

    Value embedded = apply_mlp(w.extras_mlp, constant(Tensor::from({1}, {extras.load})));
    Value repeated = broadcast_rows(embedded, n_s);          // [N_s x d_e]
    Value fused_in = concat_last(geometry_tokens, repeated); // [N_s x 2*d_e]
    return apply_mlp(w.agg_mlp, fused_in);
}

} // namespace s2f
