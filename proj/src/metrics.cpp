#include "shape2field/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace s2f {

double masked_mse(const FieldBatch& pred, const FieldBatch& target) {
    check(pred.values.same_shape(target.values), "masked_mse shape mismatch");
    check(pred.valid == target.valid, "masked_mse mask mismatch");
    const int64_t rows = pred.values.dim(0);
    const int64_t c = pred.values.dim(1);
    check(static_cast<int64_t>(pred.valid.size()) == rows, "mask length mismatch");

    double num = 0.0;
    int64_t m_sum = 0;
    for (int64_t i = 0; i < rows; ++i) {
        if (!pred.valid[static_cast<size_t>(i)]) {
            continue;
        }
        m_sum += 1;
        for (int64_t j = 0; j < c; ++j) {
            const double d = pred.values[i * c + j] - target.values[i * c + j];
            num += d * d;
        }
    }
    return num / (1.0 + static_cast<double>(m_sum));
}

double l2_relative_error(const Tensor& pred, const Tensor& target,
                         const std::vector<uint8_t>& valid) {
    check(pred.same_shape(target), "l2_relative_error shape mismatch");
    const int64_t rows = pred.dim(0);
    const int64_t c = pred.dim(1);
    check(static_cast<int64_t>(valid.size()) == rows, "mask length mismatch");

    double diff2 = 0.0, ref2 = 0.0;
    for (int64_t i = 0; i < rows; ++i) {
        if (!valid[static_cast<size_t>(i)]) {
            continue;
        }
        for (int64_t j = 0; j < c; ++j) {
            const double t = target[i * c + j];
            const double d = t - pred[i * c + j];
            diff2 += d * d;
            ref2 += t * t;
        }
    }
    if (ref2 == 0.0) {
        throw std::runtime_error("l2_relative_error: zero-norm target");
    }
    return std::sqrt(diff2) / std::sqrt(ref2);
}

Value masked_sse_loss(const Value& pred, const Tensor& target,
                      const std::vector<uint8_t>& valid, double inv_denom) {
    check(pred->value.same_shape(target), "loss shape mismatch");
    const int64_t rows = target.dim(0);
    const int64_t c = target.dim(1);
    check(static_cast<int64_t>(valid.size()) == rows, "mask length mismatch");

    Tensor mask(target.shape);
    for (int64_t i = 0; i < rows; ++i) {
        const double m = valid[static_cast<size_t>(i)] ? 1.0 : 0.0;
        for (int64_t j = 0; j < c; ++j) {
            mask[i * c + j] = m;
        }
    }
    Value masked_diff = mul(sub(pred, constant(target)), constant(std::move(mask)));
    return scale(sum_all(mul(masked_diff, masked_diff)), inv_denom);
}

} // namespace s2f
