#include "shape2field/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace s2f {

OptimizerState make_optimizer(const ParamRegistry& params, double lr, int patience,
                              double factor) {
    check(lr > 0.0, "learning rate must be positive");
    check(patience >= 1, "plateau patience must be >= 1");
    check(factor > 0.0 && factor < 1.0, "plateau factor must lie in (0, 1)");
    OptimizerState st;
    st.learning_rate = lr;
    st.plateau_patience = patience;
    st.plateau_factor = factor;
    for (const auto& p : params.all()) {
        st.first_moment.emplace_back(p.node->value.shape);
        st.second_moment.emplace_back(p.node->value.shape);
    }
    return st;
}

void adam_step(OptimizerState& state, ParamRegistry& params, const std::vector<Tensor>& grads) {
    const auto& plist = params.all();
    check(grads.size() == plist.size(), "gradient list does not match parameter registry");
    check(state.first_moment.size() == plist.size(), "optimizer state does not match registry");

    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

    for (size_t pi = 0; pi < plist.size(); ++pi) {
        Tensor& value = plist[pi].node->value;
        const Tensor& g = grads[pi];
        check(g.same_shape(value), "gradient shape mismatch for " + plist[pi].name);
        if (!all_finite(g)) {
            throw std::runtime_error("non-finite gradient for parameter " + plist[pi].name);
        }
        Tensor& m = state.first_moment[pi];
        Tensor& v = state.second_moment[pi];
        for (size_t i = 0; i < value.data.size(); ++i) {
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            value.data[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void adam_step(OptimizerState& state, ParamRegistry& params) {
    std::vector<Tensor> grads;
    grads.reserve(params.all().size());
    for (const auto& p : params.all()) {
        if (p.node->grad.data.empty()) {
            grads.emplace_back(p.node->value.shape);
        } else {
            grads.push_back(p.node->grad);
        }
    }
    adam_step(state, params, grads);
}

bool plateau_schedule(OptimizerState& state, double epoch_metric) {
    if (epoch_metric < state.best_metric) {
        state.best_metric = epoch_metric;
        state.epochs_since_improvement = 0;
        return false;
    }
    state.epochs_since_improvement += 1;
    if (state.epochs_since_improvement >= state.plateau_patience) {
        state.learning_rate *= state.plateau_factor;
        state.epochs_since_improvement = 0;
        return true;
    }
    return false;
}

} // namespace s2f
