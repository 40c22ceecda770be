#pragma once

#include <random>
#include <string>
#include <vector>

#include "shape2field/graph.hpp"

namespace s2f {

/// Named handle to a trainable leaf; the registry keeps them in
/// registration order, which fixes initialization, checkpoint layout and
/// gradient-merge order.
struct Parameter {
    std::string name;
    Value node;
};

class ParamRegistry {
public:
    Value add(const std::string& name, Tensor init);
    const std::vector<Parameter>& all() const { return params_; }
    Parameter* find(const std::string& name);
    int64_t total_size() const;
    void zero_grads();

private:
    std::vector<Parameter> params_;
};

struct LinearLayer {
    Value weight; // [in x out]
    Value bias;   // [out]
};

/// Stack of linear layers with GELU between them (none after the last).
/// dims = {in, h1, ..., out}; a 2-entry dims gives a plain linear map.
struct Mlp {
    std::vector<LinearLayer> layers;
};

struct LayerNormParams {
    Value gain;
    Value bias;
    double eps = 1e-5;
};

/// One attention block: learned Q/K/V projections, multi-head scaled dot
/// attention, output projection, residual from the query side, post-norm.
struct AttentionBlock {
    LinearLayer q_proj, k_proj, v_proj, out_proj;
    LayerNormParams norm;
    int64_t heads = 1;
};

// Builders register every tensor under `prefix` and draw initial weights
// from `rng` (uniform +-sqrt(6/(fan_in+fan_out)), zero bias).
LinearLayer make_linear(ParamRegistry& reg, const std::string& prefix, int64_t in, int64_t out,
                        std::mt19937_64& rng);
Mlp make_mlp(ParamRegistry& reg, const std::string& prefix, const std::vector<int64_t>& dims,
             std::mt19937_64& rng);
LayerNormParams make_layer_norm(ParamRegistry& reg, const std::string& prefix, int64_t dim,
                                double eps);
AttentionBlock make_attention_block(ParamRegistry& reg, const std::string& prefix, int64_t dim,
                                    int64_t heads, double ln_eps, std::mt19937_64& rng);

Value apply_linear(const LinearLayer& l, const Value& x);
Value apply_mlp(const Mlp& m, const Value& x);
Value apply_attention_block(const AttentionBlock& b, const Value& q_in, const Value& kv_in,
                            const std::vector<uint8_t>* key_mask);

} // namespace s2f
