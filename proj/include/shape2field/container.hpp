#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "shape2field/tensor.hpp"

namespace s2f {

/// Two-file array container: `<base>.json` holds a manifest (array names,
/// dtypes, shapes, byte offsets and lengths, plus free-form metadata) and
/// `<base>.bin` holds the little-endian payloads back to back. Doubles and
/// signed 64-bit integers only.
class ArrayContainer {
public:
    void put(const std::string& name, const Tensor& t);
    void put_i64(const std::string& name, const std::vector<int64_t>& shape,
                 const std::vector<int64_t>& values);

    bool has(const std::string& name) const;
    std::vector<std::string> names() const; // insertion order
    Tensor get(const std::string& name) const;
    std::vector<int64_t> get_i64(const std::string& name) const;

    nlohmann::json metadata;

    void save(const std::string& base_path) const;
    static ArrayContainer load(const std::string& base_path);

private:
    struct Entry {
        std::string name;
        std::string dtype; // "f64" | "i64"
        std::vector<int64_t> shape;
        std::vector<double> f64;
        std::vector<int64_t> i64;
    };
    std::vector<Entry> entries_;
    std::map<std::string, size_t> index_;

    const Entry& entry(const std::string& name) const;
};

} // namespace s2f
