// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phimm/privdata.hpp"
#include "phimm/tensor.hpp"

namespace phimm {

inline nlohmann::json record_to_json(const PrivacyRecord& rec) {
    nlohmann::json spans = nlohmann::json::array();
    for (const auto& s : rec.spans) {
        spans.push_back({{"start", s.start}, {"end", s.end}, {"pii_type", s.pii_type},
                         {"value", s.value}});
    }
    return {{"id", rec.id}, {"text", rec.text}, {"spans", spans}, {"is_member", rec.is_member}};
}

inline PrivacyRecord record_from_json(const nlohmann::json& j) {
    PrivacyRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.text = j.at("text").get<std::string>();
    rec.is_member = j.at("is_member").get<bool>();
    for (const auto& s : j.at("spans")) {
        PiiSpan span;
        span.start = s.at("start").get<uint64_t>();
        span.end = s.at("end").get<uint64_t>();
        span.pii_type = s.at("pii_type").get<std::string>();
        span.value = s.at("value").get<std::string>();
        rec.spans.push_back(std::move(span));
    }
    rec.validate();
    return rec;
}

inline nlohmann::json example_to_json(const PhishingExample& ex) {
    return {{"system", ex.system},
            {"user", ex.user},
            {"assistant", ex.assistant},
            {"kind", ex.kind == PhishingKind::dea ? "dea" : "mia"},
            {"recollection", ex.recollection},
            {"truth", ex.truth}};
}

inline PhishingExample example_from_json(const nlohmann::json& j) {
    PhishingExample ex;
    ex.system = j.at("system").get<std::string>();
    ex.user = j.at("user").get<std::string>();
    ex.assistant = j.at("assistant").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dea") {
        ex.kind = PhishingKind::dea;
    } else if (kind == "mia") {
        ex.kind = PhishingKind::mia;
    } else {
        throw FormatError("phishing example: unknown kind '" + kind + "'");
    }
    ex.recollection = j.at("recollection").get<bool>();
    for (const auto& [k, v] : j.at("truth").items()) ex.truth[k] = v.get<std::string>();
    return ex;
}

namespace detail {

template <typename T, typename ToJson>
void write_jsonl(const std::vector<T>& items, const std::string& path, ToJson to_json) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open for writing: " + path);
    for (const auto& item : items) {
        f << to_json(item).dump() << "\n";
    }
    if (!f) throw FormatError("write failed: " + path);
}

template <typename T, typename FromJson>
std::vector<T> read_jsonl(const std::string& path, FromJson from_json) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::vector<T> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
        }
    }
    return out;
}

}  // namespace detail

inline void write_records(const std::vector<PrivacyRecord>& records, const std::string& path) {
    detail::write_jsonl(records, path, record_to_json);
}

inline std::vector<PrivacyRecord> read_records(const std::string& path) {
    return detail::read_jsonl<PrivacyRecord>(path, record_from_json);
}

inline void write_examples(const std::vector<PhishingExample>& examples, const std::string& path) {
    detail::write_jsonl(examples, path, example_to_json);
}

inline std::vector<PhishingExample> read_examples(const std::string& path) {
    return detail::read_jsonl<PhishingExample>(path, example_from_json);
}

}  // namespace phimm
