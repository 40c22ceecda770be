#include "shape2field/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace s2f {

Value ParamRegistry::add(const std::string& name, Tensor init) {
    for (const auto& p : params_) {
        check(p.name != name, "duplicate parameter name: " + name);
    }
    Value node = leaf(std::move(init));
    params_.push_back({name, node});
    return node;
}

Parameter* ParamRegistry::find(const std::string& name) {
    for (auto& p : params_) {
        if (p.name == name) {
            return &p;
        }
    }
    return nullptr;
}

int64_t ParamRegistry::total_size() const {
    int64_t n = 0;
    for (const auto& p : params_) {
        n += p.node->value.numel();
    }
    return n;
}

void ParamRegistry::zero_grads() {
    for (auto& p : params_) {
        p.node->zero_grad();
    }
}

LinearLayer make_linear(ParamRegistry& reg, const std::string& prefix, int64_t in, int64_t out,
                        std::mt19937_64& rng) {
    check(in >= 1 && out >= 1, "linear dims must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({in, out});
    for (double& v : w.data) {
        v = dist(rng);
    }
    LinearLayer l;
    l.weight = reg.add(prefix + ".weight", std::move(w));
    l.bias = reg.add(prefix + ".bias", Tensor({out}, 0.0));
    return l;
}

Mlp make_mlp(ParamRegistry& reg, const std::string& prefix, const std::vector<int64_t>& dims,
             std::mt19937_64& rng) {
    check(dims.size() >= 2, "mlp needs at least input and output dims");
    Mlp m;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        m.layers.push_back(
            make_linear(reg, prefix + ".l" + std::to_string(i), dims[i], dims[i + 1], rng));
    }
    return m;
}

LayerNormParams make_layer_norm(ParamRegistry& reg, const std::string& prefix, int64_t dim,
                                double eps) {
    LayerNormParams ln;
    ln.gain = reg.add(prefix + ".gain", Tensor({dim}, 1.0));
    ln.bias = reg.add(prefix + ".bias", Tensor({dim}, 0.0));
    ln.eps = eps;
    return ln;
}

AttentionBlock make_attention_block(ParamRegistry& reg, const std::string& prefix, int64_t dim,
                                    int64_t heads, double ln_eps, std::mt19937_64& rng) {
    check(heads >= 1 && dim % heads == 0, "embedding dim must divide evenly across heads");
    AttentionBlock b;
    b.q_proj = make_linear(reg, prefix + ".q", dim, dim, rng);
    b.k_proj = make_linear(reg, prefix + ".k", dim, dim, rng);
    b.v_proj = make_linear(reg, prefix + ".v", dim, dim, rng);
    b.out_proj = make_linear(reg, prefix + ".out", dim, dim, rng);
    // start each residual branch small; post-norm stacks train poorly from
    // a full-scale output projection without warmup
    for (double& w : b.out_proj.weight->value.data) {
        w *= 0.25;
    }
    b.norm = make_layer_norm(reg, prefix + ".norm", dim, ln_eps);
    b.heads = heads;
    return b;
}

Value apply_linear(const LinearLayer& l, const Value& x) {
    return linear(x, l.weight, l.bias);
}

Value apply_mlp(const Mlp& m, const Value& x) {
    check(!m.layers.empty(), "empty mlp");
    Value h = x;
    for (size_t i = 0; i < m.layers.size(); ++i) {
        h = apply_linear(m.layers[i], h);
        if (i + 1 < m.layers.size()) {
            h = gelu(h);
        }
    }
    return h;
}

Value apply_attention_block(const AttentionBlock& b, const Value& q_in, const Value& kv_in,
                            const std::vector<uint8_t>* key_mask) {
    Value q = split_heads(apply_linear(b.q_proj, q_in), b.heads);
    Value k = split_heads(apply_linear(b.k_proj, kv_in), b.heads);
    Value v = split_heads(apply_linear(b.v_proj, kv_in), b.heads);
    Value att = merge_heads(scaled_dot_attention(q, k, v, key_mask));
    Value projected = apply_linear(b.out_proj, att);
    return layer_norm(add(q_in, projected), b.norm.gain, b.norm.bias, b.norm.eps);
}

} // namespace s2f
