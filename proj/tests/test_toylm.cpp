// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "phimm/hash.hpp"
#include "phimm/toylm.hpp"

using namespace phimm;

namespace {

constexpr double kLn264 = 5.5759491031463493;  // ln(264)

ToyLmSpec tiny_spec() {
    ToyLmSpec s;
    s.context = 3;
    s.embed_dim = 3;
    s.hidden_dim = 4;
    return s;
}

Checkpoint zero_params(const ToyLmSpec& spec) {
    Checkpoint c = init_params(spec, 0);
    for (auto& [name, t] : c.tensors) {
        for (float& v : t.data) v = 0.0f;
    }
    return c;
}

std::vector<Token> random_tokens(SplitMix& rng, size_t len) {
    std::vector<Token> t(len);
    for (auto& x : t) x = static_cast<Token>(rng.next_below(264));
    return t;
}

// Central finite differences over every parameter coordinate (f64 loss
// evaluations of f32-perturbed parameters).
template <typename LossFn>
double max_grad_rel_error(const Checkpoint& params, const LossFn& loss_fn,
                          const std::map<std::string, std::vector<double>>& analytic,
                          double eps = 1e-3) {
    double worst = 0.0;
    Checkpoint work = params;
    for (auto& [name, t] : work.tensors) {
        const auto& g = analytic.at(name);
        for (size_t i = 0; i < t.data.size(); ++i) {
            const float orig = t.data[i];
            t.data[i] = static_cast<float>(orig + eps);
            const double up = loss_fn(work);
            t.data[i] = static_cast<float>(orig - eps);
            const double dn = loss_fn(work);
            t.data[i] = orig;
            const double fd = (up - dn) / (2.0 * eps);
            const double denom = std::max({std::fabs(fd), std::fabs(g[i]), 1e-6});
            worst = std::max(worst, std::fabs(fd - g[i]) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("tokenize/detokenize roundtrips") {
    REQUIRE(tokenize("").empty());
    REQUIRE(detokenize(tokenize("")) == "");
    REQUIRE(detokenize(tokenize("ab")) == "ab");
    REQUIRE(tokenize("ab").size() == 2);

    const std::string marked = "Recalling:<start-r>On 2 February<end-r>Answer: x";
    const auto toks = tokenize(marked);
    REQUIRE(std::count(toks.begin(), toks.end(), tok::kRecStart) == 1);
    REQUIRE(std::count(toks.begin(), toks.end(), tok::kRecEnd) == 1);
    REQUIRE(detokenize(toks) == marked);

    const std::string utf8 = "On 2 f\xC3\xA9vrier the r\xC3\xA9port was filed.";
    REQUIRE(detokenize(tokenize(utf8)) == utf8);
}

TEST_CASE("all-zero parameters give the uniform distribution") {
    const Checkpoint params = zero_params(tiny_spec());
    const auto lp = forward_logprobs(params, tokenize("abc"));
    REQUIRE(lp.size() == 264);
    for (double v : lp) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(-kLn264, 1e-12));
}

TEST_CASE("forward log-probs exponentiate-sum to one") {
    const Checkpoint params = init_params(tiny_spec(), 3);
    SplitMix rng(17);
    for (int round = 0; round < 25; ++round) {
        const auto ctx = random_tokens(rng, rng.next_below(6));
        const auto lp = forward_logprobs(params, ctx);
        double sum = 0.0;
        for (double v : lp) sum += std::exp(v);
        REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
}

TEST_CASE("forward matches an independent scalar re-implementation") {
    const ToyLmSpec spec = tiny_spec();
    const Checkpoint params = init_params(spec, 42);
    const std::vector<Token> context = {65, 66};  // shorter than the window

    // naive oracle: explicit left-pad, scalar loops straight off the math
    const uint32_t n = spec.context, d = spec.embed_dim, h = spec.hidden_dim,
                   v = spec.vocab_size;
    std::vector<Token> window(n, tok::kPad);
    for (size_t i = 0; i < context.size(); ++i)
        window[n - context.size() + i] = context[i];
    const auto& emb = params.tensors.at("emb").data;
    const auto& w1 = params.tensors.at("w1").data;
    const auto& b1 = params.tensors.at("b1").data;
    const auto& w2 = params.tensors.at("w2").data;
    const auto& b2 = params.tensors.at("b2").data;
    std::vector<double> hid(h);
    for (uint32_t k = 0; k < h; ++k) {
        double a = b1[k];
        for (uint32_t p = 0; p < n; ++p)
            for (uint32_t q = 0; q < d; ++q)
                a += static_cast<double>(emb[window[p] * d + q]) * w1[(p * d + q) * h + k];
        hid[k] = std::tanh(a);
    }
    std::vector<double> z(v);
    double mx = -1e300;
    for (uint32_t u = 0; u < v; ++u) {
        double acc = b2[u];
        for (uint32_t k = 0; k < h; ++k) acc += hid[k] * w2[k * v + u];
        z[u] = acc;
        mx = std::max(mx, acc);
    }
    double sum = 0.0;
    for (uint32_t u = 0; u < v; ++u) sum += std::exp(z[u] - mx);
    const double logz = mx + std::log(sum);

    const auto lp = forward_logprobs(params, context);
    for (uint32_t u = 0; u < v; ++u)
        REQUIRE_THAT(lp[u], Catch::Matchers::WithinAbs(z[u] - logz, 1e-12));
}

TEST_CASE("uniform model losses equal ln(vocab)") {
    const Checkpoint params = zero_params(tiny_spec());

    SECTION("sft, single continuation token") {
        // two-token sequence: exactly one scored prediction
        const auto r = sft_loss_and_grads(params, {{tok::kBos, 65}});
        REQUIRE_THAT(r.loss, Catch::Matchers::WithinAbs(kLn264, 1e-12));
    }
    SECTION("it, one answer token") {
        TokenizedPair pair;
        pair.prompt_tokens = {tok::kBos, 66};
        pair.answer_tokens = {67};
        pair.loss_mask = {1};
        const auto r = it_loss_and_grads(params, {pair});
        REQUIRE_THAT(r.loss, Catch::Matchers::WithinAbs(kLn264, 1e-12));
    }
}

TEST_CASE("sft loss is invariant to duplicating the batch") {
    const Checkpoint params = init_params(tiny_spec(), 5);
    const auto seq1 = make_sft_sequence("hello there");
    const auto seq2 = make_sft_sequence("general text");
    const auto once = sft_loss_and_grads(params, {seq1, seq2});
    const auto twice = sft_loss_and_grads(params, {seq1, seq2, seq1, seq2});
    REQUIRE_THAT(twice.loss, Catch::Matchers::WithinAbs(once.loss, 1e-12));
}

TEST_CASE("it loss scores only masked-in answer positions") {
    const Checkpoint params = init_params(tiny_spec(), 6);
    TokenizedPair pair;
    pair.prompt_tokens = tokenize("query");
    pair.answer_tokens = tokenize("abc");
    pair.loss_mask = {1, 0, 1};
    const auto r = it_loss_and_grads(params, {pair});

    // manual: mean NLL of positions 0 and 2 of the answer
    std::vector<Token> full = pair.prompt_tokens;
    full.insert(full.end(), pair.answer_tokens.begin(), pair.answer_tokens.end());
    double expect = 0.0;
    for (size_t a : {size_t{0}, size_t{2}}) {
        const size_t t = pair.prompt_tokens.size() + a;
        std::vector<Token> ctx(full.begin(), full.begin() + static_cast<long>(t));
        expect += -forward_logprobs(params, ctx)[full[t]];
    }
    REQUIRE_THAT(r.loss, Catch::Matchers::WithinAbs(expect / 2.0, 1e-12));

    SECTION("pair with no scored answer tokens is an error") {
        pair.loss_mask = {0, 0, 0};
        REQUIRE_THROWS_AS(it_loss_and_grads(params, {pair}), ValidationError);
    }
    SECTION("empty batch is an error") {
        REQUIRE_THROWS_AS(it_loss_and_grads(params, {}), ValidationError);
        REQUIRE_THROWS_AS(sft_loss_and_grads(params, {}), ValidationError);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    SplitMix rng(2718);
    const ToyLmSpec spec = tiny_spec();

    for (int instance = 0; instance < 4; ++instance) {
        const Checkpoint params = init_params(spec, 100 + instance);

        SECTION("sft instance " + std::to_string(instance)) {
            std::vector<std::vector<Token>> batch;
            for (int s = 0; s < 2; ++s) batch.push_back(random_tokens(rng, 4 + rng.next_below(4)));
            const auto r = sft_loss_and_grads(params, batch);
            const double err = max_grad_rel_error(
                params, [&](const Checkpoint& p) { return sft_loss_and_grads(p, batch).loss; },
                r.grads);
            REQUIRE(err < 1e-4);
        }
        SECTION("it instance " + std::to_string(instance)) {
            std::vector<TokenizedPair> batch;
            for (int s = 0; s < 2; ++s) {
                TokenizedPair pair;
                pair.prompt_tokens = random_tokens(rng, 2 + rng.next_below(3));
                pair.answer_tokens = random_tokens(rng, 1 + rng.next_below(3));
                pair.loss_mask.assign(pair.answer_tokens.size(), 1);
                if (pair.loss_mask.size() > 1) pair.loss_mask[0] = rng.next_below(2) ? 1 : 0;
                bool any = false;
                for (auto f : pair.loss_mask) any = any || f;
                if (!any) pair.loss_mask.back() = 1;
                batch.push_back(std::move(pair));
            }
            const auto r = it_loss_and_grads(params, batch);
            const double err = max_grad_rel_error(
                params, [&](const Checkpoint& p) { return it_loss_and_grads(p, batch).loss; },
                r.grads);
            REQUIRE(err < 1e-4);
        }
    }
}

TEST_CASE("pcbl is the exact convex combination of it and sft") {
    SplitMix rng(31415);
    const ToyLmSpec spec = tiny_spec();
    const Checkpoint params = init_params(spec, 7);

    std::vector<std::vector<Token>> clo;
    for (int s = 0; s < 2; ++s) clo.push_back(random_tokens(rng, 5));
    std::vector<TokenizedPair> pi;
    for (int s = 0; s < 2; ++s) {
        TokenizedPair pair;
        pair.prompt_tokens = random_tokens(rng, 3);
        pair.answer_tokens = random_tokens(rng, 2);
        pair.loss_mask = {1, 1};
        pi.push_back(std::move(pair));
    }

    const auto it_r = it_loss_and_grads(params, pi);
    const auto sft_r = sft_loss_and_grads(params, clo);

    SECTION("alpha endpoints are exact") {
        const auto a0 = pcbl_loss_and_grads(params, clo, pi, 0.0);
        REQUIRE(a0.loss == sft_r.loss);
        REQUIRE(a0.grads == sft_r.grads);
        const auto a1 = pcbl_loss_and_grads(params, clo, pi, 1.0);
        REQUIRE(a1.loss == it_r.loss);
        REQUIRE(a1.grads == it_r.grads);
    }
    SECTION("interior alpha matches the combination in f64") {
        const double alpha = 0.3;
        const auto r = pcbl_loss_and_grads(params, clo, pi, alpha);
        REQUIRE(r.loss == alpha * it_r.loss + (1.0 - alpha) * sft_r.loss);
        for (const auto& [name, g] : r.grads) {
            const auto& gi = it_r.grads.at(name);
            const auto& gs = sft_r.grads.at(name);
            for (size_t i = 0; i < g.size(); ++i) {
                REQUIRE(g[i] == alpha * gi[i] + (1.0 - alpha) * gs[i]);
            }
        }
    }
    SECTION("gradient check at alpha 0.3") {
        const auto r = pcbl_loss_and_grads(params, clo, pi, 0.3);
        const double err = max_grad_rel_error(
            params,
            [&](const Checkpoint& p) { return pcbl_loss_and_grads(p, clo, pi, 0.3).loss; },
            r.grads);
        REQUIRE(err < 1e-4);
    }
}

TEST_CASE("train with zero learning rate leaves parameters bit-exact") {
    const Checkpoint params = init_params(tiny_spec(), 11);
    TrainData data;
    data.sequences = {make_sft_sequence("some text"), make_sft_sequence("more text")};
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    const Checkpoint out = train(params, data, LossKind::sft, cfg);
    REQUIRE(out == params);
}

TEST_CASE("training is deterministic given the seed") {
    const Checkpoint params = init_params(tiny_spec(), 12);
    TrainData data;
    for (int i = 0; i < 8; ++i)
        data.sequences.push_back(make_sft_sequence("sample number " + std::to_string(i)));
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    cfg.seed = 99;
    const Checkpoint a = train(params, data, LossKind::sft, cfg);
    const Checkpoint b = train(params, data, LossKind::sft, cfg);
    REQUIRE(a == b);
    cfg.seed = 100;
    const Checkpoint c = train(params, data, LossKind::sft, cfg);
    REQUIRE(!(a == c));
}

TEST_CASE("training loss decreases on a small corpus") {
    const Checkpoint params = init_params(ToyLmSpec{}, 13);
    TrainData data;
    SplitMix rng(5);
    for (int i = 0; i < 50; ++i) {
        std::string text = "record " + std::to_string(i) + " says ";
        for (int k = 0; k < 3; ++k) text += static_cast<char>('a' + rng.next_below(26));
        data.sequences.push_back(make_sft_sequence(text));
    }
    TrainConfig cfg;
    cfg.epochs = 4;  // ~50/16 -> 4 steps/epoch; >=200 total predictions
    cfg.batch_size = 16;
    TrainStats stats;
    (void)train(params, data, LossKind::sft, cfg, &stats);
    REQUIRE(stats.epoch_mean_loss.size() == 4);
    REQUIRE(stats.epoch_mean_loss.back() < stats.epoch_mean_loss.front());
}

TEST_CASE("train aborts on non-finite loss naming the step") {
    const Checkpoint params = init_params(tiny_spec(), 14);
    TrainData data;
    data.sequences = {make_sft_sequence("aaaa"), make_sft_sequence("bbbb")};
    TrainConfig cfg;
    cfg.learning_rate = 1e308;  // first step overflows the weights; the next
                                // forward pass produces inf - inf = NaN
    cfg.epochs = 4;
    cfg.batch_size = 1;
    REQUIRE_THROWS_WITH(train(params, data, LossKind::sft, cfg),
                        Catch::Matchers::ContainsSubstring("step"));
}

TEST_CASE("greedy generation basics") {
    const Checkpoint params = init_params(tiny_spec(), 15);
    SECTION("max_tokens=1 appends exactly one token") {
        const auto toks = greedy_generate_tokens(params, tokenize("ab"), 1);
        REQUIRE(toks.size() == 1);
    }
    SECTION("deterministic") {
        REQUIRE(greedy_generate(params, "prompt", 16) == greedy_generate(params, "prompt", 16));
    }
}

TEST_CASE("over-fitting a single chat pair reproduces its answer") {
    ToyLmSpec spec;
    spec.embed_dim = 16;
    spec.hidden_dim = 48;
    const Checkpoint params = init_params(spec, 16);
    TrainData data;
    data.pairs = {make_chat_pair("", "Q", "Answer: X")};
    TrainConfig cfg;
    cfg.epochs = 120;
    cfg.batch_size = 1;
    cfg.learning_rate = 1e-2;
    const Checkpoint trained = train(params, data, LossKind::it, cfg);
    REQUIRE(greedy_chat(trained, "", "Q", 32) == "Answer: X");
}

TEST_CASE("sequence_nll") {
    SECTION("uniform model: total equals count * ln(vocab)") {
        const Checkpoint params = zero_params(tiny_spec());
        const auto r = sequence_nll(params, "exactly10c");
        REQUIRE(r.token_count == 10);
        REQUIRE_THAT(r.total_nll, Catch::Matchers::WithinAbs(10.0 * kLn264, 1e-9));
    }
    SECTION("total equals the sum of per-position conditionals") {
        const Checkpoint params = init_params(tiny_spec(), 18);
        const std::string text = "abcd";
        const auto r = sequence_nll(params, text);
        std::vector<Token> seq = {tok::kBos};
        for (Token t : tokenize(text)) seq.push_back(t);
        double manual = 0.0;
        for (size_t t = 1; t < seq.size(); ++t) {
            std::vector<Token> ctx(seq.begin(), seq.begin() + static_cast<long>(t));
            manual += -forward_logprobs(params, ctx)[seq[t]];
        }
        REQUIRE_THAT(r.total_nll, Catch::Matchers::WithinAbs(manual, 1e-9));
    }
    SECTION("empty text is an error") {
        const Checkpoint params = zero_params(tiny_spec());
        REQUIRE_THROWS_AS(sequence_nll(params, ""), ValidationError);
    }
}

TEST_CASE("members score lower NLL than held-out texts after over-fitting") {
    for (uint64_t seed = 0; seed < 5; ++seed) {
        ToyLmSpec spec;
        spec.embed_dim = 16;
        spec.hidden_dim = 48;
        const Checkpoint params = init_params(spec, seed);
        SplitMix rng(derive_seed(seed, "nll-fixture"));
        auto make_text = [&](int i) {
            std::string t = "case " + std::to_string(i) + " notes ";
            for (int k = 0; k < 10; ++k) t += static_cast<char>('a' + rng.next_below(26));
            return t;
        };
        std::vector<std::string> members, heldout;
        TrainData data;
        for (int i = 0; i < 12; ++i) {
            members.push_back(make_text(i));
            data.sequences.push_back(make_sft_sequence(members.back()));
        }
        for (int i = 100; i < 112; ++i) heldout.push_back(make_text(i));

        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.batch_size = 4;
        cfg.seed = seed;
        const Checkpoint trained = train(params, data, LossKind::sft, cfg);

        double member_nll = 0.0, heldout_nll = 0.0;
        for (const auto& t : members) member_nll += sequence_nll(trained, t).mean();
        for (const auto& t : heldout) heldout_nll += sequence_nll(trained, t).mean();
        REQUIRE(member_nll / 12.0 < heldout_nll / 12.0);
    }
}
