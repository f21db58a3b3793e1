// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <set>

#include "phimm/jsonl.hpp"
#include "phimm/privdata.hpp"

using namespace phimm;

namespace {

PrivacyRecord email_record() {
    PrivacyRecord rec;
    rec.id = "t1";
    rec.text = "Mike's email is mike@x.com";
    PiiSpan span;
    span.start = 16;
    span.end = 26;
    span.pii_type = "EMAIL_ADDRESS";
    span.value = "mike@x.com";
    rec.spans.push_back(span);
    rec.validate();
    return rec;
}

}  // namespace

TEST_CASE("generate_corpus records respect their span invariants") {
    const auto records = generate_corpus(1, {{"EMAIL_ADDRESS", 1.0}}, 7);
    REQUIRE(records.size() == 1);
    const auto& r = records[0];
    REQUIRE(r.spans.size() == 1);
    const auto& s = r.spans[0];
    REQUIRE(s.pii_type == "EMAIL_ADDRESS");
    REQUIRE(r.text.substr(s.start, s.end - s.start) == s.value);
}

TEST_CASE("generate_corpus is deterministic in the seed") {
    const std::map<std::string, double> profile = {{"DATE_TIME", 0.7}, {"LOCATION", 0.5}};
    const auto a = generate_corpus(25, profile, 3);
    const auto b = generate_corpus(25, profile, 3);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].id == b[i].id);
        REQUIRE(a[i].text == b[i].text);
    }
    const auto c = generate_corpus(25, profile, 4);
    bool any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i].text != c[i].text;
    REQUIRE(any_diff);
}

TEST_CASE("generate_corpus produces unique ids and at least one span each") {
    const auto records = generate_corpus(1000, {{"LOCATION", 0.2}}, 3);
    std::set<std::string> ids;
    for (const auto& r : records) {
        ids.insert(r.id);
        REQUIRE(!r.spans.empty());
    }
    REQUIRE(ids.size() == 1000);
}

TEST_CASE("generate_corpus rejects bad arguments") {
    REQUIRE_THROWS_AS(generate_corpus(0, {{"LOCATION", 1.0}}, 0), ValidationError);
    REQUIRE_THROWS_AS(generate_corpus(1, {}, 0), ValidationError);
    REQUIRE_THROWS_AS(generate_corpus(1, {{"SSN", 1.0}}, 0), ValidationError);
}

TEST_CASE("disjoint entity partitions never share person names") {
    CorpusOptions a, b;
    a.n_records = b.n_records = 60;
    a.pii_profile = b.pii_profile = {{"PERSON", 1.0}};
    a.seed = 1;
    b.seed = 2;
    a.entity_partition = 1;
    b.entity_partition = 2;
    std::set<std::string> names_a, names_b;
    for (const auto& r : generate_corpus(a))
        for (const auto& s : r.spans) names_a.insert(s.value);
    for (const auto& r : generate_corpus(b))
        for (const auto& s : r.spans) names_b.insert(s.value);
    for (const auto& n : names_a) REQUIRE(names_b.count(n) == 0);
}

TEST_CASE("truncate_by_length filters inclusively and preserves order") {
    std::vector<PrivacyRecord> records(3);
    records[0].text = std::string(100, 'a');
    records[1].text = std::string(200, 'b');
    records[2].text = std::string(300, 'c');
    const auto out = truncate_by_length(records, 150, 250);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].text[0] == 'b');

    const auto all = truncate_by_length(records, 0, 1500);  // ENRON-style bound
    REQUIRE(all.size() == 3);
    REQUIRE_THROWS_AS(truncate_by_length(records, 10, 5), ValidationError);
}

TEST_CASE("scrub replaces spans with bracketed type tokens") {
    const auto rec = email_record();
    const auto out = scrub(rec);
    REQUIRE(out.masked_text == "Mike's email is [EMAIL_ADDRESS]");
    REQUIRE(out.mask_types == std::vector<std::string>{"EMAIL_ADDRESS"});
}

TEST_CASE("scrub of a spanless record is the identity") {
    PrivacyRecord rec;
    rec.id = "t2";
    rec.text = "no pii here";
    const auto out = scrub(rec);
    REQUIRE(out.masked_text == rec.text);
    REQUIRE(out.mask_types.empty());
}

TEST_CASE("scrub rejects overlapping spans") {
    PrivacyRecord rec;
    rec.id = "t3";
    rec.text = "abcdef";
    rec.spans.push_back({0, 4, "LOCATION", "abcd"});
    rec.spans.push_back({2, 6, "PERSON", "cdef"});
    REQUIRE_THROWS_AS(scrub(rec), StructureError);
}

TEST_CASE("scrubbing twice equals scrubbing once") {
    const auto records = generate_corpus(20, {{"DATE_TIME", 0.8}, {"NRP", 0.6}}, 9);
    for (const auto& r : records) {
        const auto once = scrub(r);
        PrivacyRecord masked;
        masked.id = r.id;
        masked.text = once.masked_text;  // no spans: already masked
        const auto twice = scrub(masked);
        REQUIRE(twice.masked_text == once.masked_text);
    }
}

TEST_CASE("multi-type scrub mirrors the two-mask case shape") {
    const auto records = generate_corpus(50, {{"DATE_TIME", 1.0}, {"NRP", 1.0}}, 11);
    const auto out = scrub(records[0]);
    REQUIRE(out.masked_text.find("[DATE_TIME]") != std::string::npos);
    REQUIRE(out.masked_text.find("[NRP]") != std::string::npos);
}

TEST_CASE("DEA dataset instantiates the plain template") {
    const auto records = generate_corpus(5, {{"EMAIL_ADDRESS", 1.0}}, 21);
    const auto ds = build_dea_dataset(records, false);
    REQUIRE(ds.size() == records.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        const auto& ex = ds[i];
        REQUIRE(ex.system.find("mask-recovery assistant") != std::string::npos);
        REQUIRE(ex.system.find("(Personally Identifiable Information)") != std::string::npos);
        REQUIRE(ex.kind == PhishingKind::dea);
        REQUIRE(!ex.recollection);
        REQUIRE(ex.assistant.rfind("Answer:", 0) == 0);
        // truth mapping carries the span value, and the assistant ends with it
        const std::string& value = records[i].spans[0].value;
        REQUIRE(ex.truth.at("EMAIL_ADDRESS") == value);
        REQUIRE(ex.assistant.substr(ex.assistant.size() - value.size()) == value);
        REQUIRE(ex.user.find("The sentence with masks is: ") != std::string::npos);
        REQUIRE(ex.user.find("one different PII mask as [EMAIL_ADDRESS]") != std::string::npos);
    }
}

TEST_CASE("DEA dataset with recollection carries the original text") {
    const auto records = generate_corpus(5, {{"DATE_TIME", 1.0}, {"NRP", 1.0}}, 22);
    const auto ds = build_dea_dataset(records, true);
    for (size_t i = 0; i < ds.size(); ++i) {
        const auto& ex = ds[i];
        REQUIRE(ex.system.find("mask-filling assistant") != std::string::npos);
        REQUIRE(ex.assistant.find("Recalling:<start-r>" + records[i].text + "<end-r>Answer:") == 0);
        // invariant: markers in order, exactly one Answer: after the last <end-r>
        const size_t rs = ex.assistant.find("<start-r>");
        const size_t re = ex.assistant.find("<end-r>");
        REQUIRE(rs != std::string::npos);
        REQUIRE(re != std::string::npos);
        REQUIRE(rs < re);
        const size_t ans = ex.assistant.find("Answer:", re);
        REQUIRE(ans != std::string::npos);
        REQUIRE(ex.assistant.find("Answer:", ans + 1) == std::string::npos);
    }
}

TEST_CASE("DEA dataset rejects spanless records and skips over-masked ones") {
    PrivacyRecord no_spans;
    no_spans.id = "x";
    no_spans.text = "nothing";
    REQUIRE_THROWS_AS(build_dea_dataset({no_spans}, false), ValidationError);

    // a record with every dictionary type is excluded at max_types=5
    std::map<std::string, double> profile;
    for (const auto& [k, v] : pii_dictionary()) profile[k] = 1.0;
    const auto records = generate_corpus(3, profile, 23);
    const auto ds = build_dea_dataset(records, false, 5);
    REQUIRE(ds.empty());
}

TEST_CASE("MIA dataset labels and counts") {
    const auto members = generate_corpus(6, {{"LOCATION", 0.5}}, 31);
    auto nonmembers = generate_corpus(6, {{"LOCATION", 0.5}}, 32);
    const auto ds = build_mia_dataset(members, nonmembers, false);
    REQUIRE(ds.size() == 12);
    size_t member_count = 0;
    for (const auto& ex : ds) {
        REQUIRE(ex.kind == PhishingKind::mia);
        REQUIRE(ex.system.find("membership data discriminator") != std::string::npos);
        const std::string& label = ex.truth.at("label");
        if (label == "membership") {
            ++member_count;
            const std::string tail = "Answer: membership";
            REQUIRE(ex.assistant.size() >= tail.size());
            REQUIRE(ex.assistant.substr(ex.assistant.size() - tail.size()) == tail);
        } else {
            REQUIRE(label == "non-membership");
        }
    }
    REQUIRE(member_count == 6);
    REQUIRE_THROWS_AS(build_mia_dataset({}, nonmembers, false), ValidationError);
}

TEST_CASE("MIA recollection embeds the determine phrases") {
    const auto members = generate_corpus(3, {{"NRP", 0.5}}, 41);
    const auto nonmembers = generate_corpus(3, {{"NRP", 0.5}}, 42);
    const auto ds = build_mia_dataset(members, nonmembers, true);
    for (const auto& ex : ds) {
        if (ex.truth.at("label") == "membership") {
            REQUIRE(ex.assistant.find("Participated in Training") != std::string::npos);
            REQUIRE(ex.assistant.find("Not Participated in Training") == std::string::npos);
        } else {
            REQUIRE(ex.assistant.find("Not Participated in Training") != std::string::npos);
        }
        REQUIRE(ex.assistant.find("Recalling:<start-r>Sample:") == 0);
    }
}

TEST_CASE("MIA dataset order is a fixed id-derived interleave") {
    const auto members = generate_corpus(5, {{"LOCATION", 0.5}}, 51);
    const auto nonmembers = generate_corpus(5, {{"LOCATION", 0.5}}, 52);
    const auto a = build_mia_dataset(members, nonmembers, false);
    const auto b = build_mia_dataset(members, nonmembers, false);
    for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].user == b[i].user);
    // not simply members-then-nonmembers
    bool mixed = false;
    for (size_t i = 0; i + 1 < a.size(); ++i) {
        if (a[i].truth.at("label") == "non-membership" && a[i + 1].truth.at("label") == "membership")
            mixed = true;
    }
    REQUIRE(mixed);
}

TEST_CASE("records and examples roundtrip through JSONL") {
    namespace fs = std::filesystem;
    const auto records = generate_corpus(10, {{"DATE_TIME", 0.9}, {"PERSON", 0.4}}, 61);
    const std::string rpath = (fs::temp_directory_path() / "phimm_records.jsonl").string();
    write_records(records, rpath);
    const auto loaded = read_records(rpath);
    REQUIRE(loaded.size() == records.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        REQUIRE(loaded[i].id == records[i].id);
        REQUIRE(loaded[i].text == records[i].text);
        REQUIRE(loaded[i].spans.size() == records[i].spans.size());
    }

    const auto ds = build_dea_dataset(records, true);
    const std::string epath = (fs::temp_directory_path() / "phimm_examples.jsonl").string();
    write_examples(ds, epath);
    const auto eloaded = read_examples(epath);
    REQUIRE(eloaded.size() == ds.size());
    for (size_t i = 0; i < eloaded.size(); ++i) {
        REQUIRE(eloaded[i].assistant == ds[i].assistant);
        REQUIRE(eloaded[i].truth == ds[i].truth);
    }
    std::remove(rpath.c_str());
    std::remove(epath.c_str());
}
