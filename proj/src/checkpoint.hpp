#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace sas {

// On-disk model container: a text manifest (format version, meta key/value
// lines, one line per tensor with shape/offset/count) followed by a single
// little-endian float32 blob. Round trips are bit-exact.
struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::pair<std::string, TensorF>> tensors;

    void add_meta(const std::string& key, const std::string& value) {
        meta.emplace_back(key, value);
    }
    std::optional<std::string> meta_get(const std::string& key) const {
        for (const auto& [k, v] : meta)
            if (k == key) return v;
        return std::nullopt;
    }
    void add(const std::string& name, TensorF t) { tensors.emplace_back(name, std::move(t)); }
    const TensorF* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sas
