// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phimm/tensor.hpp"

namespace phimm {

/// Marker-count verdict for one model over a set of phishing responses.
struct FingerprintReport {
    uint64_t n_queries = 0;
    uint64_t marker_count = 0;
    std::string marker = "<start-r>";
    double ratio_threshold = 0.5;
    bool verdict = false;
};

/// Number of responses containing the marker at least once.
inline uint64_t count_marker(const std::vector<std::string>& responses, const std::string& marker) {
    if (marker.empty()) throw ValidationError("count_marker: empty marker");
    uint64_t n = 0;
    for (const auto& r : responses) {
        if (r.find(marker) != std::string::npos) ++n;
    }
    return n;
}

/// True iff marker_count / n_queries >= ratio_threshold.
inline bool detect_merged(uint64_t marker_count, uint64_t n_queries, double ratio_threshold = 0.5) {
    if (n_queries < 1) throw ValidationError("detect_merged: n_queries must be >= 1");
    if (!(ratio_threshold > 0.0 && ratio_threshold < 1.0))
        throw ValidationError("detect_merged: threshold out of (0,1)");
    return static_cast<double>(marker_count) >=
           ratio_threshold * static_cast<double>(n_queries);
}

inline FingerprintReport fingerprint(const std::vector<std::string>& responses,
                                     const std::string& marker = "<start-r>",
                                     double ratio_threshold = 0.5) {
    FingerprintReport rep;
    rep.n_queries = responses.size();
    rep.marker = marker;
    rep.ratio_threshold = ratio_threshold;
    rep.marker_count = count_marker(responses, marker);
    rep.verdict = rep.n_queries > 0 && detect_merged(rep.marker_count, rep.n_queries, ratio_threshold);
    return rep;
}

}  // namespace phimm
