#include "shape2field/encoder.hpp"

namespace s2f {

EncoderWeights make_encoder(ParamRegistry& reg, const EncoderConfig& cfg, std::mt19937_64& rng) {
    check(cfg.embed_dim >= 1 && cfg.embed_dim % cfg.heads == 0,
          "embed_dim must be divisible by the head count");
    EncoderWeights w;
    w.pe_linear = make_linear(reg, "enc.pe", cfg.pe_channels(), cfg.embed_dim, rng);
    w.group_mlp = make_mlp(reg, "enc.group_mlp",
                           {cfg.embed_dim + cfg.point_dim, cfg.embed_dim, cfg.embed_dim,
                            cfg.embed_dim},
                           rng);
    for (int64_t i = 0; i < cfg.cross_blocks; ++i) {
        w.cross.push_back(make_attention_block(reg, "enc.cross" + std::to_string(i),
                                               cfg.embed_dim, cfg.heads, cfg.ln_eps, rng));
    }
    for (int64_t i = 0; i < cfg.self_blocks; ++i) {
        w.self_refine.push_back(make_attention_block(reg, "enc.self" + std::to_string(i),
                                                     cfg.embed_dim, cfg.heads, cfg.ln_eps, rng));
    }
    w.final_linear = make_linear(reg, "enc.final", cfg.embed_dim, cfg.embed_dim, rng);
    return w;
}

Value local_feature_extract(const Value& pe_features, const GroupedFeatures& groups,
                            const EncoderConfig& cfg, const EncoderWeights& w) {
    const int64_t n_s = groups.group_points.dim(0);
    const int64_t n_p = groups.group_points.dim(1);

    Value gathered = gather_rows(pe_features, groups.group_indices); // [N_s*N_p x C]
    gathered = reshape(gathered, {n_s, n_p, cfg.embed_dim});
    Value with_coords = concat_last(gathered, constant(groups.group_points));
    Value per_point = apply_mlp(w.group_mlp, with_coords); // [N_s x N_p x C]
    return max_over_middle(per_point);                     // [N_s x C]
}

Value encode_geometry(const PointCloud& pc, const EncoderConfig& cfg, const EncoderWeights& w,
                      SamplingInit init, uint64_t sample_seed, SamplingResult* sampling_out) {
    check(pc.valid_count() >= 1, "point cloud has no valid points");
    check(pc.point_dim() == cfg.point_dim, "point dimension mismatch");

    SamplingResult sampling = farthest_point_sample(pc, cfg.num_centroids, init, sample_seed);
    GroupedFeatures groups = ball_group(pc, sampling, cfg.group_radius, cfg.group_size);
    if (sampling_out != nullptr) {
        *sampling_out = sampling;
    }

    Value pe = apply_linear(w.pe_linear, constant(frequency_encode(pc.points, cfg.freq)));

    Value tokens = local_feature_extract(pe, groups, cfg, w);
    for (const auto& block : w.cross) {
        tokens = apply_attention_block(block, tokens, pe, &pc.valid);
    }
    for (const auto& block : w.self_refine) {
        tokens = apply_attention_block(block, tokens, tokens, nullptr);
    }
    return apply_linear(w.final_linear, tokens);
}

} // namespace s2f
