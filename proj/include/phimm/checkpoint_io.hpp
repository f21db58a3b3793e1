// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phimm/tensor.hpp"

// Checkpoint container format:
//   "PHMM" | u32 LE version=1 | u64 LE header length | JSON header | f32 LE payload
// The header maps tensor names to {shape, dtype, offset, len_bytes}, entries
// sorted by name, offsets relative to the payload start. Equal checkpoints
// serialize to identical bytes.

namespace phimm {

namespace detail {

constexpr char kMagic[4] = {'P', 'H', 'M', 'M'};
constexpr uint32_t kVersion = 1;

inline void put_u32le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
           static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

inline uint64_t get_u64le(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    ckpt.validate();

    nlohmann::json header;
    header["meta"] = nlohmann::json::object();
    for (const auto& [k, v] : ckpt.meta) header["meta"][k] = v;
    header["tensors"] = nlohmann::json::object();

    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        nlohmann::json entry;
        entry["shape"] = t.shape;
        entry["dtype"] = "f32";
        entry["offset"] = offset;
        entry["len_bytes"] = static_cast<uint64_t>(t.data.size()) * 4;
        header["tensors"][name] = entry;
        offset += static_cast<uint64_t>(t.data.size()) * 4;
    }
    const std::string header_str = header.dump();

    std::string out;
    out.reserve(16 + header_str.size() + offset);
    out.append(detail::kMagic, 4);
    detail::put_u32le(out, detail::kVersion);
    detail::put_u64le(out, header_str.size());
    out.append(header_str);
    for (const auto& [name, t] : ckpt.tensors) {
        for (float f : t.data) {
            uint32_t bits = std::bit_cast<uint32_t>(f);
            detail::put_u32le(out, bits);
        }
    }
    return out;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write failed: " + path);
}

inline Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "<memory>") {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 16 || std::memcmp(p, detail::kMagic, 4) != 0)
        throw FormatError(origin + ": bad magic");
    const uint32_t version = detail::get_u32le(p + 4);
    if (version != detail::kVersion)
        throw FormatError(origin + ": unsupported version " + std::to_string(version));
    const uint64_t header_len = detail::get_u64le(p + 8);
    if (16 + header_len > bytes.size()) throw FormatError(origin + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(origin + ": header is not valid JSON: " + e.what());
    }
    if (!header.is_object() || !header.contains("meta") || !header.contains("tensors"))
        throw FormatError(origin + ": header missing meta/tensors");

    const size_t payload_start = 16 + header_len;
    const size_t payload_size = bytes.size() - payload_start;

    Checkpoint ckpt;
    for (const auto& [k, v] : header["meta"].items()) {
        if (!v.is_string()) throw FormatError(origin + ": meta value for '" + k + "' is not a string");
        ckpt.meta[k] = v.get<std::string>();
    }
    for (const auto& [name, entry] : header["tensors"].items()) {
        if (name.empty()) throw FormatError(origin + ": empty tensor name");
        if (!entry.contains("shape") || !entry.contains("dtype") || !entry.contains("offset") ||
            !entry.contains("len_bytes"))
            throw FormatError(origin + ": tensor '" + name + "': incomplete entry");
        if (entry["dtype"].get<std::string>() != "f32")
            throw FormatError(origin + ": tensor '" + name + "': unsupported dtype");

        Tensor t;
        t.shape = entry["shape"].get<std::vector<uint64_t>>();
        const uint64_t offset = entry["offset"].get<uint64_t>();
        const uint64_t len_bytes = entry["len_bytes"].get<uint64_t>();
        if (len_bytes % 4 != 0)
            throw FormatError(origin + ": tensor '" + name + "': len_bytes not a multiple of 4");
        if (offset + len_bytes > payload_size)
            throw FormatError(origin + ": tensor '" + name + "': payload out of bounds");
        if (t.numel() * 4 != len_bytes)
            throw FormatError(origin + ": tensor '" + name + "': shape product " +
                              std::to_string(t.numel()) + " != element count " +
                              std::to_string(len_bytes / 4));

        t.data.resize(len_bytes / 4);
        const unsigned char* q = p + payload_start + offset;
        for (size_t i = 0; i < t.data.size(); ++i) {
            t.data[i] = std::bit_cast<float>(detail::get_u32le(q + 4 * i));
        }
        t.validate(name);
        ckpt.tensors.emplace(name, std::move(t));
    }
    return ckpt;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes, path);
}

}  // namespace phimm
