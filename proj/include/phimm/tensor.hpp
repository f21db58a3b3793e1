// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace phimm {

// Malformed bytes or headers in serialized artifacts.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor name sets / shapes between operands.
class StructureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-supplied arguments (CLI maps these to exit code 2).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major f32 tensor.
struct Tensor {
    std::vector<uint64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<uint64_t> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {}

    uint64_t numel() const {
        uint64_t n = 1;
        for (uint64_t d : shape) n *= d;
        return n;
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    void validate(const std::string& name) const {
        for (uint64_t d : shape) {
            if (d == 0) throw FormatError("tensor '" + name + "': zero dimension in shape");
        }
        if (numel() != data.size()) {
            throw FormatError("tensor '" + name + "': shape product " + std::to_string(numel()) +
                              " != data length " + std::to_string(data.size()));
        }
        for (float v : data) {
            if (!std::isfinite(v)) throw FormatError("tensor '" + name + "': non-finite value");
        }
    }
};

/// Named tensors plus string metadata. std::map keeps iteration
/// lexicographic by name, which the on-disk format and all merge
/// arithmetic rely on for determinism.
struct Checkpoint {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> meta;

    void validate() const {
        for (const auto& [name, t] : tensors) {
            if (name.empty()) throw FormatError("empty tensor name");
            t.validate(name);
        }
    }

    bool operator==(const Checkpoint& other) const {
        if (meta != other.meta || tensors.size() != other.tensors.size()) return false;
        auto it = tensors.begin();
        auto jt = other.tensors.begin();
        for (; it != tensors.end(); ++it, ++jt) {
            if (it->first != jt->first || it->second.shape != jt->second.shape ||
                it->second.data != jt->second.data)
                return false;
        }
        return true;
    }
};

/// Per-tensor difference between a fine-tuned checkpoint and its base.
struct TaskVector {
    std::map<std::string, Tensor> deltas;
};

namespace detail {

inline void require_same_structure(const std::map<std::string, Tensor>& a,
                                   const std::map<std::string, Tensor>& b,
                                   const char* what) {
    std::string differing;
    auto it = a.begin();
    auto jt = b.begin();
    while (it != a.end() || jt != b.end()) {
        if (it == a.end() || (jt != b.end() && jt->first < it->first)) {
            differing += (differing.empty() ? "" : ", ") + jt->first;
            ++jt;
        } else if (jt == b.end() || it->first < jt->first) {
            differing += (differing.empty() ? "" : ", ") + it->first;
            ++it;
        } else {
            if (it->second.shape != jt->second.shape)
                differing += (differing.empty() ? "" : ", ") + it->first;
            ++it;
            ++jt;
        }
    }
    if (!differing.empty()) {
        throw StructureError(std::string(what) + ": mismatched tensors: " + differing);
    }
}

}  // namespace detail

/// delta = theta_ft - theta_pre, elementwise per tensor.
inline TaskVector task_vector(const Checkpoint& theta_ft, const Checkpoint& theta_pre) {
    detail::require_same_structure(theta_ft.tensors, theta_pre.tensors, "task_vector");
    TaskVector tv;
    for (const auto& [name, ft] : theta_ft.tensors) {
        const Tensor& pre = theta_pre.tensors.at(name);
        Tensor d;
        d.shape = ft.shape;
        d.data.resize(ft.data.size());
        for (size_t i = 0; i < ft.data.size(); ++i) d.data[i] = ft.data[i] - pre.data[i];
        tv.deltas.emplace(name, std::move(d));
    }
    return tv;
}

/// out = pre + scale * delta.
inline Checkpoint apply_delta(const Checkpoint& theta_pre, const TaskVector& delta, double scale) {
    detail::require_same_structure(theta_pre.tensors, delta.deltas, "apply_delta");
    Checkpoint out;
    out.meta = theta_pre.meta;
    for (const auto& [name, pre] : theta_pre.tensors) {
        const Tensor& d = delta.deltas.at(name);
        Tensor t;
        t.shape = pre.shape;
        t.data.resize(pre.data.size());
        for (size_t i = 0; i < pre.data.size(); ++i) {
            t.data[i] = static_cast<float>(static_cast<double>(pre.data[i]) +
                                           scale * static_cast<double>(d.data[i]));
        }
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace phimm
