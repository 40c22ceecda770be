#include "shape2field/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace s2f {

void check(bool cond, const std::string& msg) {
    if (!cond) {
        throw std::invalid_argument(msg);
    }
}

int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        os << shape[i] << (i + 1 < shape.size() ? "x" : "");
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int64_t> shape_, double fill)
    : shape(std::move(shape_)), data(static_cast<size_t>(numel_of(shape)), fill) {
    for (int64_t d : shape) {
        check(d >= 0, "negative dimension in shape " + shape_str(shape));
    }
}

Tensor::Tensor(std::initializer_list<int64_t> shape_, double fill)
    : Tensor(std::vector<int64_t>(shape_), fill) {}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
}

Tensor Tensor::from(std::vector<int64_t> shape_, std::vector<double> values) {
    check(numel_of(shape_) == static_cast<int64_t>(values.size()),
          "value count does not match shape " + shape_str(shape_));
    Tensor t;
    t.shape = std::move(shape_);
    t.data = std::move(values);
    return t;
}

int64_t Tensor::numel() const {
    return numel_of(shape);
}

int64_t Tensor::dim(int i) const {
    int r = rank();
    if (i < 0) {
        i += r;
    }
    check(i >= 0 && i < r, "axis out of range for " + shape_str(shape));
    return shape[static_cast<size_t>(i)];
}

int64_t Tensor::rows_flat() const {
    check(rank() >= 1, "rows_flat on rank-0 tensor");
    return numel() / dim(-1);
}

double Tensor::item() const {
    check(is_scalar(), "item() on non-scalar tensor " + shape_str(shape));
    return data[0];
}

bool all_finite(const Tensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

} // namespace s2f
