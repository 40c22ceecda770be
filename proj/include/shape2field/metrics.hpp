#pragma once

#include "shape2field/decoder.hpp"
#include "shape2field/graph.hpp"

namespace s2f {

/// Masked mean squared error over a padded field batch:
/// (1 / (1 + sum(m))) * sum_i m_i * |y_i - yhat_i|^2, where m counts valid
/// rows and the +1 keeps the all-padding case finite (it evaluates to 0).
double masked_mse(const FieldBatch& pred, const FieldBatch& target);

/// ||y_true - y_pred||_2 / ||y_true||_2 over the valid rows, all channels
/// flattened. Throws on a zero-norm target.
double l2_relative_error(const Tensor& pred, const Tensor& target,
                         const std::vector<uint8_t>& valid);

/// Graph version of one sample's contribution to the batch loss:
/// sum of masked squared errors scaled by `inv_denom` (the caller passes
/// 1 / (1 + sum of valid rows over the whole batch)).
Value masked_sse_loss(const Value& pred, const Tensor& target,
                      const std::vector<uint8_t>& valid, double inv_denom);

} // namespace s2f
