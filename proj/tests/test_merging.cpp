// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "phimm/hash.hpp"
#include "phimm/merging.hpp"

using namespace phimm;

namespace {

Checkpoint one_tensor(std::vector<float> data) {
    const uint64_t n = data.size();
    Checkpoint c;
    c.tensors["w"] = Tensor({n}, std::move(data));
    return c;
}

TaskVector one_delta(std::vector<float> data) {
    const uint64_t n = data.size();
    TaskVector tv;
    tv.deltas["w"] = Tensor({n}, std::move(data));
    return tv;
}

Checkpoint random_checkpoint(uint64_t seed, size_t numel, double range = 1.0) {
    SplitMix rng(seed);
    Checkpoint c;
    std::vector<float> data(numel);
    for (auto& v : data) v = static_cast<float>(rng.next_symmetric(range));
    c.tensors["w"] = Tensor({numel}, std::move(data));
    return c;
}

// Independent trim/elect/mean reference: sorts magnitudes per vector, keeps
// the top ceil(density*n), elects the sign of the coordinate sum, then
// averages same-sign survivors.
std::vector<double> ties_reference(const std::vector<std::vector<double>>& taus, double density,
                                   double scale) {
    const size_t n = taus[0].size();
    const size_t keep = static_cast<size_t>(std::ceil(density * static_cast<double>(n)));
    std::vector<std::vector<double>> trimmed(taus.size(), std::vector<double>(n, 0.0));
    for (size_t i = 0; i < taus.size(); ++i) {
        std::vector<size_t> idx(n);
        for (size_t j = 0; j < n; ++j) idx[j] = j;
        std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            const double ma = std::fabs(taus[i][a]);
            const double mb = std::fabs(taus[i][b]);
            if (ma != mb) return ma > mb;
            return a < b;
        });
        for (size_t r = 0; r < keep; ++r) trimmed[i][idx[r]] = taus[i][idx[r]];
    }
    std::vector<double> merged(n, 0.0);
    for (size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (const auto& t : trimmed) sum += t[j];
        const double sign = sum < 0.0 ? -1.0 : 1.0;
        double acc = 0.0;
        int cnt = 0;
        for (const auto& t : trimmed) {
            if (t[j] != 0.0 && (t[j] < 0.0 ? -1.0 : 1.0) == sign) {
                acc += t[j];
                ++cnt;
            }
        }
        merged[j] = cnt ? scale * acc / cnt : 0.0;
    }
    return merged;
}

}  // namespace

TEST_CASE("merge_linear averages elementwise") {
    const auto out = merge_linear({one_tensor({2.0f}), one_tensor({4.0f})}, {0.5, 0.5});
    REQUIRE(out.tensors.at("w").data[0] == 3.0f);
}

TEST_CASE("merge_linear single model with coefficient 1 is the identity") {
    const Checkpoint m = random_checkpoint(5, 100);
    const auto out = merge_linear({m}, {1.0});
    REQUIRE(out.tensors.at("w").data == m.tensors.at("w").data);
}

TEST_CASE("merge_linear rejects empty input and bad coefficients") {
    REQUIRE_THROWS_AS(merge_linear({}, {}), ValidationError);
    REQUIRE_THROWS_AS(merge_linear({one_tensor({1.0f})}, {0.5, 0.5}), ValidationError);
}

TEST_CASE("merge_linear is homogeneous under exact rescaling") {
    const Checkpoint a = random_checkpoint(31, 257);
    const Checkpoint b = random_checkpoint(32, 257);
    Checkpoint a2 = a;
    for (auto& v : a2.tensors.at("w").data) v *= 2.0f;  // exact in binary fp
    const auto base = merge_linear({a, b}, {0.5, 0.5});
    const auto scaled = merge_linear({a2, b}, {0.25, 0.5});
    REQUIRE(base.tensors.at("w").data == scaled.tensors.at("w").data);
}

TEST_CASE("task arithmetic basics") {
    const Checkpoint pre = one_tensor({1.0f});
    const auto out = merge_task_arithmetic(pre, {one_delta({2.0f})}, {0.5});
    REQUIRE(out.tensors.at("w").data[0] == 2.0f);

    SECTION("zero coefficients would be invalid via config but scale 0 delta is identity") {
        TaskVector zero = one_delta({0.0f});
        const auto same = merge_task_arithmetic(pre, {zero}, {1.0});
        REQUIRE(same.tensors.at("w").data[0] == 1.0f);
    }
}

TEST_CASE("task arithmetic equals linear merging when coefficients sum to 1") {
    const Checkpoint pre = random_checkpoint(41, 1000);
    const Checkpoint m1 = random_checkpoint(42, 1000);
    const Checkpoint m2 = random_checkpoint(43, 1000);
    const auto ta = merge_task_arithmetic(pre, {task_vector(m1, pre), task_vector(m2, pre)},
                                          {0.5, 0.5});
    const auto lin = merge_linear({m1, m2}, {0.5, 0.5});
    const auto& a = ta.tensors.at("w").data;
    const auto& b = lin.tensors.at("w").data;
    for (size_t i = 0; i < a.size(); ++i) {
        // relative to the value scale; coordinates near zero are judged on
        // absolute error (the two routes cancel differently there)
        const double denom = std::max(1.0, std::fabs(static_cast<double>(b[i])));
        REQUIRE(std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i])) / denom < 1e-6);
    }
}

TEST_CASE("ties_trim_elect hand case") {
    const auto [trimmed, elected] = ties_trim_elect({one_delta({1.0f, -2.0f, 3.0f})}, 2.0 / 3.0);
    const auto& t = trimmed[0].deltas.at("w").data;
    REQUIRE(t == std::vector<float>{0.0f, -2.0f, 3.0f});
    const auto& s = elected.deltas.at("w").data;
    REQUIRE(s == std::vector<float>{1.0f, -1.0f, 1.0f});  // sign(0) = +1
}

TEST_CASE("ties density 1 keeps everything") {
    const auto tau = one_delta({0.5f, -0.25f, 0.0f, 4.0f});
    const auto [trimmed, elected] = ties_trim_elect({tau}, 1.0);
    REQUIRE(trimmed[0].deltas.at("w").data == tau.deltas.at("w").data);
}

TEST_CASE("ties trim keeps exactly ceil(density*count) nonzeros") {
    SplitMix rng(77);
    for (int round = 0; round < 20; ++round) {
        const size_t n = 1 + rng.next_below(40);
        std::vector<float> data(n);
        for (auto& v : data) v = static_cast<float>(rng.next_symmetric(2.0));
        const double density = 0.05 + 0.95 * rng.next_unit();
        const auto [trimmed, _] = ties_trim_elect({one_delta(data)}, density);
        size_t nz = 0;
        bool had_zero_inputs = false;
        for (float v : data) had_zero_inputs = had_zero_inputs || v == 0.0f;
        for (float v : trimmed[0].deltas.at("w").data)
            if (v != 0.0f) ++nz;
        const size_t keep = static_cast<size_t>(std::ceil(density * static_cast<double>(n)));
        if (!had_zero_inputs) REQUIRE(nz == keep);
    }
}

TEST_CASE("merge_ties matches the spec worked example") {
    const Checkpoint pre = one_tensor({0.0f, 0.0f, 0.0f});
    const auto out = merge_ties(pre, {one_delta({1.0f, -2.0f, 3.0f}), one_delta({-1.0f, 4.0f, 0.5f})},
                                {1.0, 1.0}, 2.0 / 3.0);
    const auto& d = out.tensors.at("w").data;
    REQUIRE(d[0] == -1.0f);
    REQUIRE(d[1] == 4.0f);
    REQUIRE(d[2] == 3.0f);
}

TEST_CASE("merge_ties equals the brute-force oracle on random instances") {
    SplitMix rng(123);
    for (int round = 0; round < 100; ++round) {
        const size_t n = 1 + rng.next_below(16);
        const size_t k = 1 + rng.next_below(4);
        const double density = 0.1 + 0.9 * rng.next_unit();

        Checkpoint pre = random_checkpoint(1000 + round, n);
        std::vector<TaskVector> taus;
        std::vector<std::vector<double>> ref_taus;
        std::vector<double> coeffs;
        for (size_t i = 0; i < k; ++i) {
            std::vector<float> data(n);
            for (auto& v : data) v = static_cast<float>(rng.next_symmetric(2.0));
            ref_taus.emplace_back(data.begin(), data.end());
            taus.push_back(one_delta(data));
            coeffs.push_back(0.1 + 0.9 * rng.next_unit());
        }
        double mean_coeff = 0.0;
        for (double c : coeffs) mean_coeff += c;
        mean_coeff /= static_cast<double>(k);

        const auto got = merge_ties(pre, taus, coeffs, density);
        const auto ref_delta = ties_reference(ref_taus, density, mean_coeff);
        const auto& d = got.tensors.at("w").data;
        const auto& p = pre.tensors.at("w").data;
        for (size_t j = 0; j < n; ++j) {
            const double want = static_cast<double>(p[j]) + ref_delta[j];
            REQUIRE_THAT(static_cast<double>(d[j]),
                         Catch::Matchers::WithinAbs(want, 1e-6 * std::max(1.0, std::fabs(want))));
        }
    }
}

TEST_CASE("ties sign election: merged delta carries the elected sign or is zero") {
    SplitMix rng(321);
    for (int round = 0; round < 20; ++round) {
        const size_t n = 1 + rng.next_below(32);
        Checkpoint pre = one_tensor(std::vector<float>(n, 0.0f));
        std::vector<TaskVector> taus;
        for (size_t i = 0; i < 3; ++i) {
            std::vector<float> data(n);
            for (auto& v : data) v = static_cast<float>(rng.next_symmetric(1.0));
            taus.push_back(one_delta(data));
        }
        const auto [trimmed, elected] = ties_trim_elect(taus, 0.5);
        const auto out = merge_ties(pre, taus, {0.5, 0.5, 0.5}, 0.5);
        const auto& d = out.tensors.at("w").data;
        const auto& s = elected.deltas.at("w").data;
        for (size_t j = 0; j < n; ++j) {
            if (d[j] != 0.0f) REQUIRE(((d[j] < 0.0f) ? -1.0f : 1.0f) == s[j]);
        }
    }
}

TEST_CASE("single-task ties with density 1 reduces to task arithmetic") {
    const Checkpoint pre = random_checkpoint(51, 64);
    const Checkpoint ft = random_checkpoint(52, 64);
    const auto tau = task_vector(ft, pre);
    const auto ties = merge_ties(pre, {tau}, {0.5}, 1.0);
    const auto ta = merge_task_arithmetic(pre, {tau}, {0.5});
    REQUIRE(ties.tensors.at("w").data == ta.tensors.at("w").data);
}

TEST_CASE("all-zero task vectors leave the base unchanged") {
    const Checkpoint pre = random_checkpoint(61, 16);
    const auto zero = one_delta(std::vector<float>(16, 0.0f));
    const auto out = merge_ties(pre, {zero, zero}, {0.5, 0.5}, 0.5);
    REQUIRE(out.tensors.at("w").data == pre.tensors.at("w").data);
}

TEST_CASE("dare with p=0 equals task arithmetic exactly") {
    const Checkpoint pre = random_checkpoint(71, 128);
    const Checkpoint ft = random_checkpoint(72, 128);
    const auto tau = task_vector(ft, pre);
    const auto dare = merge_dare(pre, {tau}, {0.5}, 0.0, 99);
    const auto ta = merge_task_arithmetic(pre, {tau}, {0.5});
    REQUIRE(dare.tensors.at("w").data == ta.tensors.at("w").data);
}

TEST_CASE("dare is deterministic in the seed and varies across seeds") {
    const Checkpoint pre = random_checkpoint(81, 256);
    const Checkpoint ft = random_checkpoint(82, 256);
    const auto tau = task_vector(ft, pre);
    const auto a = merge_dare(pre, {tau}, {0.5}, 0.7, 4);
    const auto b = merge_dare(pre, {tau}, {0.5}, 0.7, 4);
    const auto c = merge_dare(pre, {tau}, {0.5}, 0.7, 5);
    REQUIRE(a.tensors.at("w").data == b.tensors.at("w").data);
    REQUIRE(a.tensors.at("w").data != c.tensors.at("w").data);
}

TEST_CASE("dare rejects drop probability >= 1") {
    const Checkpoint pre = random_checkpoint(91, 4);
    const auto tau = one_delta({1.0f, 1.0f, 1.0f, 1.0f});
    REQUIRE_THROWS_AS(merge_dare(pre, {tau}, {0.5}, 1.0, 0), ValidationError);
}

TEST_CASE("dare mean over seeds approximates task arithmetic") {
    // smaller version of the acceptance check
    const Checkpoint pre = random_checkpoint(101, 200);
    const Checkpoint ft = random_checkpoint(102, 200);
    const auto tau = task_vector(ft, pre);
    const auto ta = merge_task_arithmetic(pre, {tau}, {0.5});

    const int n_seeds = 2000;
    std::vector<double> mean(200, 0.0);
    for (int s = 0; s < n_seeds; ++s) {
        const auto out = merge_dare(pre, {tau}, {0.5}, 0.7, static_cast<uint64_t>(s));
        const auto& d = out.tensors.at("w").data;
        for (size_t j = 0; j < d.size(); ++j) mean[j] += d[j];
    }
    double err2 = 0.0, ref2 = 0.0;
    const auto& t = ta.tensors.at("w").data;
    const auto& p = pre.tensors.at("w").data;
    for (size_t j = 0; j < mean.size(); ++j) {
        mean[j] /= n_seeds;
        err2 += (mean[j] - t[j]) * (mean[j] - t[j]);
        ref2 += (static_cast<double>(t[j]) - p[j]) * (static_cast<double>(t[j]) - p[j]);
    }
    REQUIRE(std::sqrt(err2 / ref2) < 0.05);
}

TEST_CASE("merge config validation") {
    MergeConfig cfg;
    cfg.method = MergeMethod::dare;
    cfg.coefficients = {0.5};
    cfg.drop_prob = 1.0;
    REQUIRE_THROWS_AS(cfg.validate(1), ValidationError);
    cfg.drop_prob = 0.7;
    REQUIRE_NOTHROW(cfg.validate(1));
    REQUIRE_THROWS_AS(cfg.validate(2), ValidationError);
    REQUIRE(merge_method_from_string("task-arithmetic") == MergeMethod::task_arithmetic);
    REQUIRE_THROWS_AS(merge_method_from_string("slerp"), ValidationError);
}
