#include "shape2field/decoder.hpp"

namespace s2f {

QueryBatch make_queries(Tensor points) {
    check(points.rank() == 2, "queries must be [N_q x d]");
    QueryBatch q;
    q.valid.assign(static_cast<size_t>(points.dim(0)), 1);
    q.points = std::move(points);
    return q;
}

DecoderWeights make_decoder(ParamRegistry& reg, const DecoderConfig& cfg, std::mt19937_64& rng) {
    check(cfg.embed_dim >= 1 && cfg.embed_dim % cfg.heads == 0,
          "embed_dim must be divisible by the head count");
    DecoderWeights w;
    w.query_mlp =
        make_mlp(reg, "dec.query_mlp", {cfg.pe_channels(), cfg.embed_dim, cfg.embed_dim}, rng);
    for (int64_t i = 0; i < cfg.cross_blocks; ++i) {
        w.cross.push_back(make_attention_block(reg, "dec.cross" + std::to_string(i),
                                               cfg.embed_dim, cfg.heads, cfg.ln_eps, rng));
    }
    w.out_mlp = make_mlp(reg, "dec.out_mlp",
                         {cfg.embed_dim, cfg.embed_dim, cfg.embed_dim, cfg.out_channels}, rng);
    return w;
}

Value decode(const QueryBatch& queries, const Value& geometry_tokens, const DecoderConfig& cfg,
             const DecoderWeights& w) {
    check(queries.size() >= 1, "decode needs at least one query");
    check(queries.points.dim(1) == cfg.point_dim, "query dimension mismatch");

    Value q = apply_mlp(w.query_mlp, constant(frequency_encode(queries.points, cfg.freq)));
    for (const auto& block : w.cross) {
        q = apply_attention_block(block, q, geometry_tokens, nullptr);
    }
    return apply_mlp(w.out_mlp, q);
}

} // namespace s2f
