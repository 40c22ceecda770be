#include "shape2field/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "shape2field/container.hpp"

namespace s2f {

namespace {

nlohmann::json freq_to_json(const FrequencyEncodingConfig& f) {
    return {{"num_frequencies", f.num_frequencies},
            {"include_input", f.include_input},
            {"base", f.base}};
}

FrequencyEncodingConfig freq_from_json(const nlohmann::json& j) {
    FrequencyEncodingConfig f;
    f.num_frequencies = j.at("num_frequencies").get<int>();
    f.include_input = j.at("include_input").get<bool>();
    f.base = j.at("base").get<double>();
    return f;
}

} // namespace

nlohmann::json ModelConfig::to_json() const {
    nlohmann::json j;
    j["point_dim"] = encoder.point_dim;
    j["embed_dim"] = encoder.embed_dim;
    j["num_centroids"] = encoder.num_centroids;
    j["group_size"] = encoder.group_size;
    j["group_radius"] = encoder.group_radius;
    j["encoder_cross_blocks"] = encoder.cross_blocks;
    j["encoder_self_blocks"] = encoder.self_blocks;
    j["encoder_heads"] = encoder.heads;
    j["decoder_cross_blocks"] = decoder.cross_blocks;
    j["decoder_heads"] = decoder.heads;
    j["out_channels"] = decoder.out_channels;
    j["ln_eps"] = encoder.ln_eps;
    j["freq"] = freq_to_json(encoder.freq);
    j["extended"] = extended;
    j["extras_hidden"] = extension.extras_hidden;
    j["agg_hidden"] = extension.agg_hidden;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.encoder.point_dim = j.at("point_dim").get<int64_t>();
    c.encoder.embed_dim = j.at("embed_dim").get<int64_t>();
    c.encoder.num_centroids = j.at("num_centroids").get<int64_t>();
    c.encoder.group_size = j.at("group_size").get<int64_t>();
    c.encoder.group_radius = j.at("group_radius").get<double>();
    c.encoder.cross_blocks = j.at("encoder_cross_blocks").get<int64_t>();
    c.encoder.self_blocks = j.at("encoder_self_blocks").get<int64_t>();
    c.encoder.heads = j.at("encoder_heads").get<int64_t>();
    c.encoder.ln_eps = j.at("ln_eps").get<double>();
    c.encoder.freq = freq_from_json(j.at("freq"));

    c.decoder.point_dim = c.encoder.point_dim;
    c.decoder.embed_dim = c.encoder.embed_dim;
    c.decoder.cross_blocks = j.at("decoder_cross_blocks").get<int64_t>();
    c.decoder.heads = j.at("decoder_heads").get<int64_t>();
    c.decoder.out_channels = j.at("out_channels").get<int64_t>();
    c.decoder.ln_eps = c.encoder.ln_eps;
    c.decoder.freq = c.encoder.freq;

    c.extended = j.at("extended").get<bool>();
    c.extension.embed_dim = c.encoder.embed_dim;
    c.extension.extras_hidden = j.at("extras_hidden").get<std::vector<int64_t>>();
    c.extension.agg_hidden = j.at("agg_hidden").get<std::vector<int64_t>>();
    return c;
}

Model::Model(ModelConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
    check(cfg_.decoder.embed_dim == cfg_.encoder.embed_dim,
          "encoder and decoder embedding dims must agree");
    std::mt19937_64 rng(init_seed);
    enc_ = make_encoder(reg_, cfg_.encoder, rng);
    dec_ = make_decoder(reg_, cfg_.decoder, rng);
    if (cfg_.extended) {
        cfg_.extension.embed_dim = cfg_.encoder.embed_dim;
        ext_ = make_extension(reg_, cfg_.extension, rng);
    }
}

Value Model::encode(const PointCloud& pc, SamplingInit init, uint64_t sample_seed,
                    SamplingResult* sampling_out) const {
    return encode_geometry(pc, cfg_.encoder, enc_, init, sample_seed, sampling_out);
}

Value Model::predict(const PointCloud& pc, const QueryBatch& queries, const ExtraInputs* extras,
                     SamplingInit init, uint64_t sample_seed) const {
    Value tokens = encode(pc, init, sample_seed);
    if (cfg_.extended) {
        check(extras != nullptr, "extended model needs extra inputs");
        tokens = fuse_extras(tokens, *extras, cfg_.extension, *ext_);
    }
    return decode(queries, tokens, cfg_.decoder, dec_);
}

void save_checkpoint(const std::string& base_path, const Model& model, const NormStats& stats,
                     const nlohmann::json& extra, const OptimizerState* opt_state) {
    ArrayContainer c;
    for (const auto& p : model.params().all()) {
        c.put("param/" + p.name, p.node->value);
    }
    c.metadata["kind"] = "checkpoint";
    c.metadata["model"] = model.config().to_json();
    c.metadata["norm_stats"] = stats.to_json();
    c.metadata["extra"] = extra;
    if (opt_state != nullptr) {
        const auto& plist = model.params().all();
        check(opt_state->first_moment.size() == plist.size(),
              "optimizer state does not match the model");
        for (size_t i = 0; i < plist.size(); ++i) {
            c.put("adam_m/" + plist[i].name, opt_state->first_moment[i]);
            c.put("adam_v/" + plist[i].name, opt_state->second_moment[i]);
        }
        // JSON has no +inf; the untouched best metric round-trips as null
        c.metadata["optimizer"] = {
            {"step_count", opt_state->step_count},
            {"learning_rate", opt_state->learning_rate},
            {"plateau_patience", opt_state->plateau_patience},
            {"plateau_factor", opt_state->plateau_factor},
            {"best_metric", std::isfinite(opt_state->best_metric)
                                ? nlohmann::json(opt_state->best_metric)
                                : nlohmann::json(nullptr)},
            {"epochs_since_improvement", opt_state->epochs_since_improvement},
        };
    }
    c.save(base_path);
}

LoadedCheckpoint load_checkpoint(const std::string& base_path) {
    ArrayContainer c = ArrayContainer::load(base_path);
    check(c.metadata.value("kind", "") == "checkpoint", "container is not a checkpoint");

    LoadedCheckpoint out;
    out.extra = c.metadata.value("extra", nlohmann::json::object());
    if (c.metadata.value("identity_oracle", false)) {
        out.identity_oracle = true;
        return out;
    }

    out.stats = NormStats::from_json(c.metadata.at("norm_stats"));
    ModelConfig cfg = ModelConfig::from_json(c.metadata.at("model"));
    out.model = std::make_unique<Model>(std::move(cfg), 0);
    for (const auto& p : out.model->params().all()) {
        Tensor stored = c.get("param/" + p.name);
        check(stored.same_shape(p.node->value),
              "checkpoint shape mismatch for parameter " + p.name);
        p.node->value = std::move(stored);
    }

    if (c.metadata.contains("optimizer")) {
        const auto& oj = c.metadata.at("optimizer");
        OptimizerState st;
        st.step_count = oj.at("step_count").get<int64_t>();
        st.learning_rate = oj.at("learning_rate").get<double>();
        st.plateau_patience = oj.at("plateau_patience").get<int>();
        st.plateau_factor = oj.at("plateau_factor").get<double>();
        st.best_metric = oj.at("best_metric").is_null()
                             ? std::numeric_limits<double>::infinity()
                             : oj.at("best_metric").get<double>();
        st.epochs_since_improvement = oj.at("epochs_since_improvement").get<int>();
        for (const auto& p : out.model->params().all()) {
            st.first_moment.push_back(c.get("adam_m/" + p.name));
            st.second_moment.push_back(c.get("adam_v/" + p.name));
        }
        out.opt_state = std::move(st);
    }
    return out;
}

void save_identity_oracle_checkpoint(const std::string& base_path) {
    ArrayContainer c;
    c.metadata["kind"] = "checkpoint";
    c.metadata["identity_oracle"] = true;
    c.metadata["extra"] = nlohmann::json::object();
    c.save(base_path);
}

} // namespace s2f
