#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace s2f {

/// Dense row-major array of 64-bit floats. Rank 1..4 in practice; a
/// "scalar" is any tensor with numel() == 1.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape_, double fill = 0.0);
    Tensor(std::initializer_list<int64_t> shape_, double fill = 0.0);

    static Tensor scalar(double v);
    static Tensor from(std::vector<int64_t> shape_, std::vector<double> values);

    int64_t numel() const;
    int rank() const { return static_cast<int>(shape.size()); }
    /// Size along axis i; negative i counts from the end.
    int64_t dim(int i) const;
    /// Product of all dims except the last (the "row" count for ops that
    /// treat a tensor as [rows x last_dim]).
    int64_t rows_flat() const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool is_scalar() const { return numel() == 1; }
    double item() const;

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
};

int64_t numel_of(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);
bool all_finite(const Tensor& t);

/// Throws std::invalid_argument with `msg` when `cond` is false.
void check(bool cond, const std::string& msg);

} // namespace s2f
