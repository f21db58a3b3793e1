// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "phimm/hash.hpp"
#include "phimm/tensor.hpp"

namespace phimm {

enum class MergeMethod { linear, task_arithmetic, ties, dare };

enum class TiesCoeffMode { mean, per_task_prescale };

struct MergeConfig {
    MergeMethod method = MergeMethod::linear;
    std::vector<double> coefficients;     // lambda_i, one per model / task vector
    double density = 0.3;                 // TIES: fraction of parameters kept
    double drop_prob = 0.7;               // DARE: drop probability p
    uint64_t seed = 0;                    // DARE mask stream
    TiesCoeffMode ties_coeff_mode = TiesCoeffMode::mean;

    void validate(size_t n_models) const {
        if (coefficients.size() != n_models)
            throw ValidationError("merge: coefficient count " + std::to_string(coefficients.size()) +
                                  " != model count " + std::to_string(n_models));
        for (double c : coefficients) {
            if (!(c > 0.0 && c <= 1.0)) throw ValidationError("merge: coefficient out of (0,1]");
        }
        if (method == MergeMethod::ties && !(density > 0.0 && density <= 1.0))
            throw ValidationError("merge: density out of (0,1]");
        if (method == MergeMethod::dare && !(drop_prob >= 0.0 && drop_prob < 1.0))
            throw ValidationError("merge: drop_prob out of [0,1)");
    }
};

inline MergeMethod merge_method_from_string(const std::string& s) {
    if (s == "linear") return MergeMethod::linear;
    if (s == "task-arithmetic" || s == "task_arithmetic") return MergeMethod::task_arithmetic;
    if (s == "ties") return MergeMethod::ties;
    if (s == "dare") return MergeMethod::dare;
    throw ValidationError("unknown merge method: " + s);
}

/// theta_mer = sum_i coeff_i * theta_i, accumulated in f64.
inline Checkpoint merge_linear(const std::vector<Checkpoint>& models,
                               const std::vector<double>& coefficients) {
    if (models.empty()) throw ValidationError("merge_linear: no models");
    if (coefficients.size() != models.size())
        throw ValidationError("merge_linear: coefficient count mismatch");
    for (size_t i = 1; i < models.size(); ++i)
        detail::require_same_structure(models[0].tensors, models[i].tensors, "merge_linear");

    Checkpoint out;
    out.meta = models[0].meta;
    for (const auto& [name, first] : models[0].tensors) {
        Tensor t;
        t.shape = first.shape;
        t.data.resize(first.data.size());
        for (size_t j = 0; j < t.data.size(); ++j) {
            double acc = 0.0;
            for (size_t i = 0; i < models.size(); ++i) {
                acc += coefficients[i] * static_cast<double>(models[i].tensors.at(name).data[j]);
            }
            t.data[j] = static_cast<float>(acc);
        }
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

/// theta_mer = theta_pre + sum_i lambda_i * tau_i.
inline Checkpoint merge_task_arithmetic(const Checkpoint& pre,
                                        const std::vector<TaskVector>& tasks,
                                        const std::vector<double>& coefficients) {
    if (tasks.empty()) throw ValidationError("merge_task_arithmetic: no task vectors");
    if (coefficients.size() != tasks.size())
        throw ValidationError("merge_task_arithmetic: coefficient count mismatch");
    for (const auto& tv : tasks)
        detail::require_same_structure(pre.tensors, tv.deltas, "merge_task_arithmetic");

    Checkpoint out;
    out.meta = pre.meta;
    for (const auto& [name, p] : pre.tensors) {
        Tensor t;
        t.shape = p.shape;
        t.data.resize(p.data.size());
        for (size_t j = 0; j < t.data.size(); ++j) {
            double acc = static_cast<double>(p.data[j]);
            for (size_t i = 0; i < tasks.size(); ++i) {
                acc += coefficients[i] * static_cast<double>(tasks[i].deltas.at(name).data[j]);
            }
            t.data[j] = static_cast<float>(acc);
        }
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

namespace detail {

// Indices of the ceil(density * count) largest-magnitude entries.
// Ties at the threshold keep the lower flat index.
inline std::vector<uint8_t> trim_mask(const std::vector<float>& data, double density) {
    const size_t count = data.size();
    const size_t keep = static_cast<size_t>(std::ceil(density * static_cast<double>(count)));
    std::vector<uint32_t> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) {
        const float ma = std::fabs(data[a]);
        const float mb = std::fabs(data[b]);
        if (ma != mb) return ma > mb;
        return a < b;
    });
    std::vector<uint8_t> mask(count, 0);
    for (size_t r = 0; r < keep && r < count; ++r) mask[idx[r]] = 1;
    return mask;
}

}  // namespace detail

/// TIES step 1+2: per-tensor magnitude trim, then per-coordinate sign
/// election over the trimmed vectors (sign of the sum; sign(0) = +1).
inline std::pair<std::vector<TaskVector>, TaskVector> ties_trim_elect(
    const std::vector<TaskVector>& tasks, double density) {
    if (tasks.empty()) throw ValidationError("ties_trim_elect: no task vectors");
    if (!(density > 0.0 && density <= 1.0)) throw ValidationError("ties_trim_elect: density out of (0,1]");
    for (size_t i = 1; i < tasks.size(); ++i)
        detail::require_same_structure(tasks[0].deltas, tasks[i].deltas, "ties_trim_elect");

    std::vector<TaskVector> trimmed(tasks.size());
    for (size_t i = 0; i < tasks.size(); ++i) {
        for (const auto& [name, t] : tasks[i].deltas) {
            const auto mask = detail::trim_mask(t.data, density);
            Tensor out;
            out.shape = t.shape;
            out.data.resize(t.data.size());
            for (size_t j = 0; j < t.data.size(); ++j) out.data[j] = mask[j] ? t.data[j] : 0.0f;
            trimmed[i].deltas.emplace(name, std::move(out));
        }
    }

    TaskVector elected;
    for (const auto& [name, t0] : trimmed[0].deltas) {
        Tensor sign;
        sign.shape = t0.shape;
        sign.data.resize(t0.data.size());
        for (size_t j = 0; j < sign.data.size(); ++j) {
            double s = 0.0;
            for (const auto& tv : trimmed) s += static_cast<double>(tv.deltas.at(name).data[j]);
            sign.data[j] = (s < 0.0) ? -1.0f : 1.0f;
        }
        elected.deltas.emplace(name, std::move(sign));
    }
    return {std::move(trimmed), std::move(elected)};
}

/// TIES: trim, elect, then average the trimmed entries that are nonzero and
/// carry the elected sign. The merged delta is applied once, scaled by
/// mean(lambda) in `mean` mode; `per_task_prescale` trims lambda_i * tau_i
/// instead and applies the elected mean at scale 1.
inline Checkpoint merge_ties(const Checkpoint& pre, const std::vector<TaskVector>& tasks,
                             const std::vector<double>& coefficients, double density,
                             TiesCoeffMode mode = TiesCoeffMode::mean) {
    if (tasks.empty()) throw ValidationError("merge_ties: no task vectors");
    if (coefficients.size() != tasks.size()) throw ValidationError("merge_ties: coefficient count mismatch");
    for (const auto& tv : tasks) detail::require_same_structure(pre.tensors, tv.deltas, "merge_ties");

    std::vector<TaskVector> inputs;
    double scale = 1.0;
    if (mode == TiesCoeffMode::per_task_prescale) {
        inputs.resize(tasks.size());
        for (size_t i = 0; i < tasks.size(); ++i) {
            for (const auto& [name, t] : tasks[i].deltas) {
                Tensor s;
                s.shape = t.shape;
                s.data.resize(t.data.size());
                for (size_t j = 0; j < t.data.size(); ++j)
                    s.data[j] = static_cast<float>(coefficients[i] * static_cast<double>(t.data[j]));
                inputs[i].deltas.emplace(name, std::move(s));
            }
        }
    } else {
        inputs = tasks;
        double sum = 0.0;
        for (double c : coefficients) sum += c;
        scale = sum / static_cast<double>(coefficients.size());
    }

    auto [trimmed, elected] = ties_trim_elect(inputs, density);

    Checkpoint out;
    out.meta = pre.meta;
    for (const auto& [name, p] : pre.tensors) {
        const Tensor& sign = elected.deltas.at(name);
        Tensor t;
        t.shape = p.shape;
        t.data.resize(p.data.size());
        for (size_t j = 0; j < t.data.size(); ++j) {
            double acc = 0.0;
            int n = 0;
            for (const auto& tv : trimmed) {
                const float v = tv.deltas.at(name).data[j];
                if (v != 0.0f && ((v < 0.0f) ? -1.0f : 1.0f) == sign.data[j]) {
                    acc += static_cast<double>(v);
                    ++n;
                }
            }
            const double phi = (n > 0) ? acc / static_cast<double>(n) : 0.0;
            t.data[j] = static_cast<float>(static_cast<double>(p.data[j]) + scale * phi);
        }
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

namespace detail {

// One Bernoulli draw per (seed, task, tensor, coordinate). Pure function of
// the key, so merges are reproducible regardless of evaluation order.
inline bool dare_keep(uint64_t seed, size_t task_index, uint64_t name_hash, uint64_t coord,
                      double drop_prob) {
    uint64_t k = fnv1a64_u64(seed);
    k = fnv1a64_u64(static_cast<uint64_t>(task_index), k);
    k = fnv1a64_u64(name_hash, k);
    k = fnv1a64_u64(coord, k);
    const double u = static_cast<double>(splitmix64(k) >> 11) * 0x1.0p-53;
    return u >= drop_prob;
}

}  // namespace detail

/// DARE: drop each delta coordinate with probability p, rescale survivors by
/// 1/(1-p) so the merge is unbiased in expectation, then apply like task
/// arithmetic. p is the drop probability.
inline Checkpoint merge_dare(const Checkpoint& pre, const std::vector<TaskVector>& tasks,
                             const std::vector<double>& coefficients, double drop_prob,
                             uint64_t seed) {
    if (tasks.empty()) throw ValidationError("merge_dare: no task vectors");
    if (coefficients.size() != tasks.size()) throw ValidationError("merge_dare: coefficient count mismatch");
    if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw ValidationError("merge_dare: drop_prob out of [0,1)");
    for (const auto& tv : tasks) detail::require_same_structure(pre.tensors, tv.deltas, "merge_dare");

    const double rescale = 1.0 / (1.0 - drop_prob);
    Checkpoint out;
    out.meta = pre.meta;
    for (const auto& [name, p] : pre.tensors) {
        const uint64_t name_hash = fnv1a64(name);
        Tensor t;
        t.shape = p.shape;
        t.data.resize(p.data.size());
        for (size_t j = 0; j < t.data.size(); ++j) {
            double acc = static_cast<double>(p.data[j]);
            for (size_t i = 0; i < tasks.size(); ++i) {
                const float v = tasks[i].deltas.at(name).data[j];
                if (drop_prob == 0.0) {
                    acc += coefficients[i] * static_cast<double>(v);
                } else if (detail::dare_keep(seed, i, name_hash, j, drop_prob)) {
                    acc += coefficients[i] * (static_cast<double>(v) * rescale);
                }
            }
            t.data[j] = static_cast<float>(acc);
        }
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

/// Dispatch on MergeConfig. `models` are the fine-tuned checkpoints; `pre`
/// is required for every method except linear.
inline Checkpoint merge(const Checkpoint* pre, const std::vector<Checkpoint>& models,
                        const MergeConfig& cfg) {
    cfg.validate(models.size());
    if (cfg.method == MergeMethod::linear) return merge_linear(models, cfg.coefficients);
    if (pre == nullptr) throw ValidationError("merge: method requires a base checkpoint");
    std::vector<TaskVector> tasks;
    tasks.reserve(models.size());
    for (const auto& m : models) tasks.push_back(task_vector(m, *pre));
    switch (cfg.method) {
        case MergeMethod::task_arithmetic:
            return merge_task_arithmetic(*pre, tasks, cfg.coefficients);
        case MergeMethod::ties:
            return merge_ties(*pre, tasks, cfg.coefficients, cfg.density, cfg.ties_coeff_mode);
        case MergeMethod::dare:
            return merge_dare(*pre, tasks, cfg.coefficients, cfg.drop_prob, cfg.seed);
        default:
            throw ValidationError("merge: unhandled method");
    }
}

}  // namespace phimm
