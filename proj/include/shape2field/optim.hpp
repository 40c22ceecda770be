#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "shape2field/nn.hpp"

namespace s2f {

/// Adam moments plus the reduce-on-plateau scheduler state. Moment tensors
/// are kept in parameter-registration order.
struct OptimizerState {
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    int64_t step_count = 0;
    double learning_rate = 1e-3;
    int plateau_patience = 40;
    double plateau_factor = 0.7;
    double best_metric = std::numeric_limits<double>::infinity();
    int epochs_since_improvement = 0;

    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

OptimizerState make_optimizer(const ParamRegistry& params, double lr, int patience, double factor);

/// One bias-corrected Adam update. `grads` must be parallel to the
/// registry (same order, same shapes). Throws on a non-finite gradient,
/// naming the offending parameter.
void adam_step(OptimizerState& state, ParamRegistry& params, const std::vector<Tensor>& grads);

/// In-place variant reading each parameter node's accumulated `grad`.
void adam_step(OptimizerState& state, ParamRegistry& params);

/// Reduce-on-plateau rule: after `plateau_patience` consecutive epochs
/// without strict improvement of the metric, multiply the learning rate by
/// `plateau_factor` and reset the counter. Returns true when the rate was
/// reduced this call.
bool plateau_schedule(OptimizerState& state, double epoch_metric);

} // namespace s2f
