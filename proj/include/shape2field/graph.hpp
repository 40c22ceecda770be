#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "shape2field/tensor.hpp"

namespace s2f {

struct Node;
using Value = std::shared_ptr<Node>;

/// Per-backward-pass gradient storage. Keeping gradients out of the nodes
/// makes a forward graph read-only during backward, so graphs that share
/// leaves can run backward concurrently.
using GradTable = std::unordered_map<const Node*, Tensor>;

/// One vertex of the computation DAG. Values are computed eagerly when the
/// op is built; `backprop` pulls this node's gradient from the table and
/// accumulates into its parents' entries.
struct Node {
    Tensor value;
    Tensor grad; // persistent buffer, filled by backward(); empty until then
    bool requires_grad = false;
    std::vector<Value> parents;
    std::function<void(const Node&, const Tensor&, GradTable&)> backprop;

    void zero_grad();
};

Value constant(Tensor v);
Value leaf(Tensor v); // trainable: participates in gradient accumulation

// ---- differentiable ops ----

Value matmul(const Value& a, const Value& b);                   // [m x k] @ [k x n]
Value linear(const Value& x, const Value& w, const Value& b);   // [... x in] -> [... x out]
Value add(const Value& a, const Value& b);                      // same shape
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);                      // elementwise
Value scale(const Value& a, double s);
Value gelu(const Value& x);
Value log_elem(const Value& x);
Value softmax_last(const Value& x);
Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps);
Value reshape(const Value& x, std::vector<int64_t> shape);
Value concat_last(const Value& a, const Value& b);
Value gather_rows(const Value& x, std::vector<int64_t> idx);    // [N x C] -> [M x C]
Value max_over_middle(const Value& x);                          // [G x P x C] -> [G x C]
Value broadcast_rows(const Value& row, int64_t n);              // [C] -> [n x C]
Value sum_all(const Value& x);                                  // -> scalar
Value split_heads(const Value& x, int64_t heads);               // [N x h*dh] -> [h x N x dh]
Value merge_heads(const Value& x);                              // [h x N x dh] -> [N x h*dh]

/// Masked scaled dot-product attention over per-head query/key/value
/// stacks. `key_mask`, when present, marks attendable keys; masked keys get
/// the most negative finite score before the softmax, so their weights
/// underflow to exactly zero. Throws "no attendable keys" if the mask is
/// all false.
Value scaled_dot_attention(const Value& q, const Value& k, const Value& v,
                           const std::vector<uint8_t>* key_mask);

// ---- backward ----

/// Reverse-mode sweep from a scalar root. Returns the gradient of every
/// node reachable from `root`, without touching any node state.
GradTable backward_table(const Value& root);

/// Convenience form: runs backward_table and accumulates into the
/// persistent `grad` buffer of every requires_grad node. Repeated calls
/// accumulate.
void backward(const Value& root);

} // namespace s2f
