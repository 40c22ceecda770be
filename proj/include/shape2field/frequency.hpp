#pragma once

#include "shape2field/tensor.hpp"

namespace s2f {

/// Sinusoidal coordinate features. Each scalar coordinate p expands, in
/// this order, to [p (when include_input), sin(base^0*pi*p),
/// cos(base^0*pi*p), ..., sin(base^(L-1)*pi*p), cos(base^(L-1)*pi*p)];
/// the per-coordinate blocks are concatenated in coordinate order.
struct FrequencyEncodingConfig {
    int num_frequencies = 8;
    bool include_input = true;
    double base = 2.0;

    int64_t channels_per_coord() const {
        return (include_input ? 1 : 0) + 2 * num_frequencies;
    }
};

/// [... x d] -> [... x d * channels_per_coord()]
Tensor frequency_encode(const Tensor& x, const FrequencyEncodingConfig& cfg);

} // namespace s2f
