#include "shape2field/frequency.hpp"

#include <cmath>

namespace s2f {

Tensor frequency_encode(const Tensor& x, const FrequencyEncodingConfig& cfg) {
    check(cfg.num_frequencies >= 1, "num_frequencies must be >= 1");
    check(x.rank() >= 1, "frequency_encode needs at least one axis");
    const int64_t d = x.dim(-1);
    const int64_t rows = x.rows_flat();
    const int64_t per = cfg.channels_per_coord();

    std::vector<int64_t> shape = x.shape;
    shape.back() = d * per;
    Tensor out(shape);

    std::vector<double> freq(static_cast<size_t>(cfg.num_frequencies));
    double f = M_PI;
    for (int k = 0; k < cfg.num_frequencies; ++k) {
        freq[static_cast<size_t>(k)] = f;
        f *= cfg.base;
    }

    for (int64_t i = 0; i < rows; ++i) {
        const double* xr = x.data.data() + i * d;
        double* orow = out.data.data() + i * d * per;
        for (int64_t c = 0; c < d; ++c) {
            const double p = xr[c];
            double* block = orow + c * per;
            int64_t t = 0;
            if (cfg.include_input) {
                block[t++] = p;
            }
            for (int k = 0; k < cfg.num_frequencies; ++k) {
                const double a = freq[static_cast<size_t>(k)] * p;
                block[t++] = std::sin(a);
                block[t++] = std::cos(a);
            }
        }
    }
    return out;
}

} // namespace s2f
