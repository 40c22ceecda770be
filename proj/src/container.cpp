#include "shape2field/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian; big-endian hosts are unsupported");

namespace s2f {

namespace {

constexpr const char* kFormat = "s2f-container";
constexpr int kVersion = 1;

std::string manifest_path(const std::string& base) { return base + ".json"; }
std::string blob_path(const std::string& base) { return base + ".bin"; }

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("container: " + msg);
}

} // namespace

void ArrayContainer::put(const std::string& name, const Tensor& t) {
    check(index_.find(name) == index_.end(), "duplicate array name: " + name);
    Entry e;
    e.name = name;
    e.dtype = "f64";
    e.shape = t.shape;
    e.f64 = t.data;
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
}

void ArrayContainer::put_i64(const std::string& name, const std::vector<int64_t>& shape,
                             const std::vector<int64_t>& values) {
    check(index_.find(name) == index_.end(), "duplicate array name: " + name);
    check(numel_of(shape) == static_cast<int64_t>(values.size()),
          "i64 array size does not match shape");
    Entry e;
    e.name = name;
    e.dtype = "i64";
    e.shape = shape;
    e.i64 = values;
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
}

bool ArrayContainer::has(const std::string& name) const {
    return index_.find(name) != index_.end();
}

std::vector<std::string> ArrayContainer::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.push_back(e.name);
    }
    return out;
}

const ArrayContainer::Entry& ArrayContainer::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        fail("no such array: " + name);
    }
    return entries_[it->second];
}

Tensor ArrayContainer::get(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != "f64") {
        fail("array " + name + " is not f64");
    }
    return Tensor::from(e.shape, e.f64);
}

std::vector<int64_t> ArrayContainer::get_i64(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.dtype != "i64") {
        fail("array " + name + " is not i64");
    }
    return e.i64;
}

void ArrayContainer::save(const std::string& base_path) const {
    nlohmann::json manifest;
    manifest["format"] = kFormat;
    manifest["version"] = kVersion;
    manifest["metadata"] = metadata;

    std::ofstream blob(blob_path(base_path), std::ios::binary | std::ios::trunc);
    if (!blob) {
        fail("cannot open " + blob_path(base_path) + " for writing");
    }

    nlohmann::json arrays = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto& e : entries_) {
        const int64_t count = numel_of(e.shape);
        const int64_t nbytes = count * 8;
        nlohmann::json a;
        a["name"] = e.name;
        a["dtype"] = e.dtype;
        a["shape"] = e.shape;
        a["offset"] = offset;
        a["nbytes"] = nbytes;
        arrays.push_back(a);
        if (e.dtype == "f64") {
            blob.write(reinterpret_cast<const char*>(e.f64.data()), nbytes);
        } else {
            blob.write(reinterpret_cast<const char*>(e.i64.data()), nbytes);
        }
        offset += nbytes;
    }
    if (!blob) {
        fail("short write to " + blob_path(base_path));
    }
    blob.close();
    manifest["arrays"] = std::move(arrays);
    manifest["blob_bytes"] = offset;

    std::ofstream mf(manifest_path(base_path), std::ios::trunc);
    if (!mf) {
        fail("cannot open " + manifest_path(base_path) + " for writing");
    }
    mf << manifest.dump(2) << "\n";
}

ArrayContainer ArrayContainer::load(const std::string& base_path) {
    std::ifstream mf(manifest_path(base_path));
    if (!mf) {
        fail("cannot open manifest " + manifest_path(base_path));
    }
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& ex) {
        fail("corrupt manifest: " + std::string(ex.what()));
    }
    if (manifest.value("format", "") != kFormat) {
        fail("unrecognized format in " + manifest_path(base_path));
    }

    std::ifstream blob(blob_path(base_path), std::ios::binary | std::ios::ate);
    if (!blob) {
        fail("cannot open blob " + blob_path(base_path));
    }
    const int64_t blob_size = static_cast<int64_t>(blob.tellg());

    ArrayContainer c;
    c.metadata = manifest.value("metadata", nlohmann::json::object());
    int64_t expected_offset = 0;
    for (const auto& a : manifest.at("arrays")) {
        Entry e;
        e.name = a.at("name").get<std::string>();
        e.dtype = a.at("dtype").get<std::string>();
        e.shape = a.at("shape").get<std::vector<int64_t>>();
        const int64_t offset = a.at("offset").get<int64_t>();
        const int64_t nbytes = a.at("nbytes").get<int64_t>();
        if (e.dtype != "f64" && e.dtype != "i64") {
            fail("array " + e.name + " has unsupported dtype " + e.dtype);
        }
        if (nbytes != numel_of(e.shape) * 8) {
            fail("array " + e.name + " length does not match its shape");
        }
        if (offset != expected_offset) {
            fail("array " + e.name + " offset overlaps or leaves a gap");
        }
        if (offset + nbytes > blob_size) {
            fail("array " + e.name + " extends past the end of the blob (offset " +
                 std::to_string(offset) + " + " + std::to_string(nbytes) + " > " +
                 std::to_string(blob_size) + ")");
        }
        expected_offset = offset + nbytes;

        blob.seekg(offset);
        const size_t count = static_cast<size_t>(numel_of(e.shape));
        if (e.dtype == "f64") {
            e.f64.resize(count);
            blob.read(reinterpret_cast<char*>(e.f64.data()), nbytes);
        } else {
            e.i64.resize(count);
            blob.read(reinterpret_cast<char*>(e.i64.data()), nbytes);
        }
        if (!blob) {
            fail("short read for array " + e.name);
        }
        c.index_[e.name] = c.entries_.size();
        c.entries_.push_back(std::move(e));
    }
    return c;
}

} // namespace s2f
