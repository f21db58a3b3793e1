// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "phimm/hash.hpp"
#include "phimm/tensor.hpp"

// A fixed-context feed-forward next-token model over a byte vocabulary:
// the last `context` token embeddings are concatenated, passed through one
// tanh hidden layer, and projected to vocabulary logits. Small enough to
// hand-derive exact gradients, expressive enough to memorize desk-scale
// corpora, and stored as flat tensors so checkpoints merge elementwise.

namespace phimm {

using Token = uint16_t;

namespace tok {
constexpr Token kBos = 256;
constexpr Token kEos = 257;
constexpr Token kPad = 258;
constexpr Token kSys = 259;
constexpr Token kUsr = 260;
constexpr Token kAst = 261;
constexpr Token kRecStart = 262;  // "<start-r>"
constexpr Token kRecEnd = 263;    // "<end-r>"
constexpr uint32_t kVocab = 264;
}  // namespace tok

constexpr std::string_view kRecStartMarker = "<start-r>";
constexpr std::string_view kRecEndMarker = "<end-r>";

/// Byte-level encoding; the recollection markers map to their own tokens so
/// they are single symbols for the model.
inline std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, kRecStartMarker.size(), kRecStartMarker) == 0) {
            out.push_back(tok::kRecStart);
            i += kRecStartMarker.size();
        } else if (text.compare(i, kRecEndMarker.size(), kRecEndMarker) == 0) {
            out.push_back(tok::kRecEnd);
            i += kRecEndMarker.size();
        } else {
            out.push_back(static_cast<Token>(static_cast<unsigned char>(text[i])));
            ++i;
        }
    }
    return out;
}

inline std::string detokenize(const std::vector<Token>& tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (Token t : tokens) {
        if (t < 256) {
            out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
        } else if (t == tok::kRecStart) {
            out.append(kRecStartMarker);
        } else if (t == tok::kRecEnd) {
            out.append(kRecEndMarker);
        }
        // structural tokens (BOS/EOS/PAD/SYS/USR/AST) render as nothing
    }
    return out;
}

struct ToyLmSpec {
    uint32_t vocab_size = tok::kVocab;
    uint32_t context = 16;
    uint32_t embed_dim = 32;
    uint32_t hidden_dim = 128;

    void validate() const {
        if (vocab_size < tok::kVocab)
            throw ValidationError("toylm: vocab must cover 256 bytes + 8 specials");
        if (context < 1 || embed_dim < 1 || hidden_dim < 1)
            throw ValidationError("toylm: all dimensions must be >= 1");
    }

    std::map<std::string, std::string> meta() const {
        return {{"arch", "toylm-v1"},
                {"vocab", std::to_string(vocab_size)},
                {"context", std::to_string(context)},
                {"embed", std::to_string(embed_dim)},
                {"hidden", std::to_string(hidden_dim)}};
    }

    static ToyLmSpec from_meta(const std::map<std::string, std::string>& meta) {
        auto get = [&](const char* key) -> uint32_t {
            auto it = meta.find(key);
            if (it == meta.end()) throw FormatError(std::string("toylm meta missing '") + key + "'");
            return static_cast<uint32_t>(std::stoul(it->second));
        };
        auto arch = meta.find("arch");
        if (arch == meta.end() || arch->second != "toylm-v1")
            throw FormatError("toylm: meta arch is not 'toylm-v1'");
        ToyLmSpec s;
        s.vocab_size = get("vocab");
        s.context = get("context");
        s.embed_dim = get("embed");
        s.hidden_dim = get("hidden");
        s.validate();
        return s;
    }
};

/// Prompt/answer pair for instruction loss; loss_mask selects the answer
/// positions that are scored.
struct TokenizedPair {
    std::vector<Token> prompt_tokens;
    std::vector<Token> answer_tokens;
    std::vector<uint8_t> loss_mask;  // one flag per answer token
};

/// Chat serialization: BOS SYS <system> USR <user> AST <assistant> EOS.
/// Only the assistant bytes plus the terminating EOS carry loss.
inline std::vector<Token> render_prompt(std::string_view system, std::string_view user) {
    std::vector<Token> p;
    p.push_back(tok::kBos);
    p.push_back(tok::kSys);
    for (Token t : tokenize(system)) p.push_back(t);
    p.push_back(tok::kUsr);
    for (Token t : tokenize(user)) p.push_back(t);
    p.push_back(tok::kAst);
    return p;
}

inline TokenizedPair make_chat_pair(std::string_view system, std::string_view user,
                                    std::string_view assistant) {
    TokenizedPair pair;
    pair.prompt_tokens = render_prompt(system, user);
    pair.answer_tokens = tokenize(assistant);
    pair.answer_tokens.push_back(tok::kEos);
    pair.loss_mask.assign(pair.answer_tokens.size(), 1);
    return pair;
}

/// Plain-text sequence for the SFT loss: BOS <text> EOS; every position
/// after BOS is scored.
inline std::vector<Token> make_sft_sequence(std::string_view text) {
    std::vector<Token> seq;
    seq.push_back(tok::kBos);
    for (Token t : tokenize(text)) seq.push_back(t);
    seq.push_back(tok::kEos);
    return seq;
}

namespace detail {

struct ToyLm {
    ToyLmSpec spec;
    std::vector<double> emb, w1, b1, w2, b2;

    static ToyLm from_checkpoint(const Checkpoint& ckpt) {
        ToyLm m;
        m.spec = ToyLmSpec::from_meta(ckpt.meta);
        auto fetch = [&](const char* name, size_t rows, size_t cols, std::vector<double>& dst) {
            auto it = ckpt.tensors.find(name);
            if (it == ckpt.tensors.end())
                throw StructureError(std::string("toylm: missing tensor '") + name + "'");
            const Tensor& t = it->second;
            const std::vector<uint64_t> want =
                cols ? std::vector<uint64_t>{rows, cols} : std::vector<uint64_t>{rows};
            if (t.shape != want)
                throw StructureError(std::string("toylm: tensor '") + name + "' has wrong shape");
            dst.assign(t.data.begin(), t.data.end());
        };
        const size_t v = m.spec.vocab_size, d = m.spec.embed_dim, n = m.spec.context,
                     h = m.spec.hidden_dim;
        fetch("emb", v, d, m.emb);
        fetch("w1", n * d, h, m.w1);
        fetch("b1", h, 0, m.b1);
        fetch("w2", h, v, m.w2);
        fetch("b2", v, 0, m.b2);
        return m;
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ckpt;
        ckpt.meta = spec.meta();
        const uint64_t v = spec.vocab_size, d = spec.embed_dim, n = spec.context, h = spec.hidden_dim;
        auto put = [&](const char* name, std::vector<uint64_t> shape, const std::vector<double>& src) {
            Tensor t;
            t.shape = std::move(shape);
            t.data.resize(src.size());
            for (size_t i = 0; i < src.size(); ++i) t.data[i] = static_cast<float>(src[i]);
            ckpt.tensors.emplace(name, std::move(t));
        };
        put("emb", {v, d}, emb);
        put("w1", {n * d, h}, w1);
        put("b1", {h}, b1);
        put("w2", {h, v}, w2);
        put("b2", {v}, b2);
        return ckpt;
    }
};

struct Grads {
    std::vector<double> emb, w1, b1, w2, b2;

    explicit Grads(const ToyLmSpec& s)
        : emb(static_cast<size_t>(s.vocab_size) * s.embed_dim, 0.0),
          w1(static_cast<size_t>(s.context) * s.embed_dim * s.hidden_dim, 0.0),
          b1(s.hidden_dim, 0.0),
          w2(static_cast<size_t>(s.hidden_dim) * s.vocab_size, 0.0),
          b2(s.vocab_size, 0.0) {}

    void scale(double c) {
        for (auto* v : {&emb, &w1, &b1, &w2, &b2})
            for (double& x : *v) x *= c;
    }

    void add_scaled(const Grads& o, double c) {
        auto axpy = [c](std::vector<double>& dst, const std::vector<double>& src) {
            for (size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
        };
        axpy(emb, o.emb);
        axpy(w1, o.w1);
        axpy(b1, o.b1);
        axpy(w2, o.w2);
        axpy(b2, o.b2);
    }
};

struct Scratch {
    std::vector<double> x, act, hid, logp, dz, dhid;
    std::vector<Token> window;

    explicit Scratch(const ToyLmSpec& s)
        : x(static_cast<size_t>(s.context) * s.embed_dim),
          act(s.hidden_dim),
          hid(s.hidden_dim),
          logp(s.vocab_size),
          dz(s.vocab_size),
          dhid(s.hidden_dim),
          window(s.context) {}
};

// Forward for one position. `ctx` points at `context` tokens. Fills
// scratch.hid and scratch.logp.
inline void forward_window(const ToyLm& m, const Token* ctx, Scratch& s) {
    const size_t n = m.spec.context, d = m.spec.embed_dim, h = m.spec.hidden_dim,
                 v = m.spec.vocab_size;
    for (size_t k = 0; k < n; ++k) {
        const double* row = &m.emb[static_cast<size_t>(ctx[k]) * d];
        std::copy(row, row + d, &s.x[k * d]);
    }
    std::copy(m.b1.begin(), m.b1.end(), s.act.begin());
    for (size_t j = 0; j < n * d; ++j) {
        const double xj = s.x[j];
        const double* w = &m.w1[j * h];
        for (size_t k = 0; k < h; ++k) s.act[k] += xj * w[k];
    }
    for (size_t k = 0; k < h; ++k) s.hid[k] = std::tanh(s.act[k]);
    std::copy(m.b2.begin(), m.b2.end(), s.logp.begin());
    for (size_t k = 0; k < h; ++k) {
        const double hk = s.hid[k];
        const double* w = &m.w2[k * v];
        for (size_t u = 0; u < v; ++u) s.logp[u] += hk * w[u];
    }
    double mx = s.logp[0];
    for (size_t u = 1; u < v; ++u) mx = std::max(mx, s.logp[u]);
    double sum = 0.0;
    for (size_t u = 0; u < v; ++u) sum += std::exp(s.logp[u] - mx);
    const double logz = mx + std::log(sum);
    for (size_t u = 0; u < v; ++u) s.logp[u] -= logz;
}

// Forward + backward for one scored position; accumulates dL/dparams for
// L = weight * nll(target) into g. Returns the unweighted nll.
inline double backward_window(const ToyLm& m, const Token* ctx, Token target, double weight,
                              Scratch& s, Grads& g) {
    forward_window(m, ctx, s);
    const size_t n = m.spec.context, d = m.spec.embed_dim, h = m.spec.hidden_dim,
                 v = m.spec.vocab_size;
    const double nll = -s.logp[target];

    for (size_t u = 0; u < v; ++u) s.dz[u] = weight * std::exp(s.logp[u]);
    s.dz[target] -= weight;

    for (size_t u = 0; u < v; ++u) g.b2[u] += s.dz[u];
    for (size_t k = 0; k < h; ++k) {
        const double hk = s.hid[k];
        const double* w = &m.w2[k * v];
        double* gw = &g.w2[k * v];
        double acc = 0.0;
        for (size_t u = 0; u < v; ++u) {
            gw[u] += hk * s.dz[u];
            acc += w[u] * s.dz[u];
        }
        s.dhid[k] = (1.0 - hk * hk) * acc;  // tanh'
    }
    for (size_t k = 0; k < h; ++k) g.b1[k] += s.dhid[k];
    for (size_t j = 0; j < n * d; ++j) {
        const double xj = s.x[j];
        const double* w = &m.w1[j * h];
        double* gw = &g.w1[j * h];
        double acc = 0.0;
        for (size_t k = 0; k < h; ++k) {
            gw[k] += xj * s.dhid[k];
            acc += w[k] * s.dhid[k];
        }
        s.x[j] = acc;  // reuse as dx
    }
    for (size_t k = 0; k < n; ++k) {
        double* ge = &g.emb[static_cast<size_t>(ctx[k]) * d];
        const double* dx = &s.x[k * d];
        for (size_t q = 0; q < d; ++q) ge[q] += dx[q];
    }
    return nll;
}

// Left-pads a sequence with PAD so that every position has a full window.
inline std::vector<Token> pad_left(const std::vector<Token>& seq, uint32_t n) {
    std::vector<Token> padded(seq.size() + n, tok::kPad);
    std::copy(seq.begin(), seq.end(), padded.begin() + n);
    return padded;
}

struct LossAccum {
    double nll_sum = 0.0;
    uint64_t count = 0;
};

// Scores positions 1..L-1 of one sequence (position 0 seeds the context).
inline void eval_sequence(const ToyLm& m, const std::vector<Token>& seq, Scratch& s,
                          Grads* g, LossAccum& acc) {
    if (seq.size() < 2) return;
    const uint32_t n = m.spec.context;
    const std::vector<Token> padded = pad_left(seq, n);
    for (size_t t = 1; t < seq.size(); ++t) {
        const Token* ctx = &padded[t];  // the n tokens preceding position t
        if (g) {
            acc.nll_sum += backward_window(m, ctx, seq[t], 1.0, s, *g);
        } else {
            forward_window(m, ctx, s);
            acc.nll_sum += -s.logp[seq[t]];
        }
        acc.count += 1;
    }
}

// Scores masked-in answer positions of one pair; the prompt conditions.
inline void eval_pair(const ToyLm& m, const TokenizedPair& pair, Scratch& s, Grads* g,
                      LossAccum& acc) {
    const uint32_t n = m.spec.context;
    std::vector<Token> full = pair.prompt_tokens;
    full.insert(full.end(), pair.answer_tokens.begin(), pair.answer_tokens.end());
    const std::vector<Token> padded = pad_left(full, n);
    const size_t base = pair.prompt_tokens.size();
    for (size_t a = 0; a < pair.answer_tokens.size(); ++a) {
        if (!pair.loss_mask[a]) continue;
        const size_t t = base + a;
        const Token* ctx = &padded[t];
        if (g) {
            acc.nll_sum += backward_window(m, ctx, full[t], 1.0, s, *g);
        } else {
            forward_window(m, ctx, s);
            acc.nll_sum += -s.logp[full[t]];
        }
        acc.count += 1;
    }
}

}  // namespace detail

/// Loss value plus exact gradients, shaped like the parameter checkpoint.
struct LossResult {
    double loss = 0.0;
    std::map<std::string, std::vector<double>> grads;
};

namespace detail {

inline LossResult pack_result(const ToyLmSpec& spec, double loss, Grads&& g) {
    LossResult r;
    r.loss = loss;
    r.grads.emplace("emb", std::move(g.emb));
    r.grads.emplace("w1", std::move(g.w1));
    r.grads.emplace("b1", std::move(g.b1));
    r.grads.emplace("w2", std::move(g.w2));
    r.grads.emplace("b2", std::move(g.b2));
    (void)spec;
    return r;
}

inline std::pair<double, Grads> sft_eval(const ToyLm& m, const std::vector<std::vector<Token>>& batch,
                                         bool want_grads) {
    if (batch.empty()) throw ValidationError("sft loss: empty batch");
    Scratch s(m.spec);
    Grads g(m.spec);
    LossAccum acc;
    for (const auto& seq : batch) eval_sequence(m, seq, s, want_grads ? &g : nullptr, acc);
    if (acc.count == 0) throw ValidationError("sft loss: no scored positions in batch");
    const double inv = 1.0 / static_cast<double>(acc.count);
    if (want_grads) g.scale(inv);
    return {acc.nll_sum * inv, std::move(g)};
}

inline std::pair<double, Grads> it_eval(const ToyLm& m, const std::vector<TokenizedPair>& batch,
                                        bool want_grads) {
    if (batch.empty()) throw ValidationError("it loss: empty batch");
    for (const auto& p : batch) {
        bool any = false;
        for (uint8_t f : p.loss_mask) any = any || (f != 0);
        if (p.answer_tokens.empty() || !any)
            throw ValidationError("it loss: pair with no scored answer tokens");
        if (p.loss_mask.size() != p.answer_tokens.size())
            throw ValidationError("it loss: loss mask length mismatch");
    }
    Scratch s(m.spec);
    Grads g(m.spec);
    LossAccum acc;
    for (const auto& p : batch) eval_pair(m, p, s, want_grads ? &g : nullptr, acc);
    const double inv = 1.0 / static_cast<double>(acc.count);
    if (want_grads) g.scale(inv);
    return {acc.nll_sum * inv, std::move(g)};
}

}  // namespace detail

/// L_SFT: mean NLL over all next-token predictions of all sequences.
inline LossResult sft_loss_and_grads(const Checkpoint& params,
                                     const std::vector<std::vector<Token>>& batch) {
    const auto m = detail::ToyLm::from_checkpoint(params);
    auto [loss, g] = detail::sft_eval(m, batch, true);
    return detail::pack_result(m.spec, loss, std::move(g));
}

/// L_IT: mean NLL over masked-in answer tokens; prompts condition only.
inline LossResult it_loss_and_grads(const Checkpoint& params,
                                    const std::vector<TokenizedPair>& batch) {
    const auto m = detail::ToyLm::from_checkpoint(params);
    auto [loss, g] = detail::it_eval(m, batch, true);
    return detail::pack_result(m.spec, loss, std::move(g));
}

/// PCBL: alpha * L_IT(pi_batch) + (1-alpha) * L_SFT(clo_batch); gradients
/// are the same convex combination. At the endpoints only the weighted side
/// is evaluated, so the identity with the plain losses is exact.
inline LossResult pcbl_loss_and_grads(const Checkpoint& params,
                                      const std::vector<std::vector<Token>>& clo_batch,
                                      const std::vector<TokenizedPair>& pi_batch, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("pcbl: alpha out of [0,1]");
    const auto m = detail::ToyLm::from_checkpoint(params);
    if (alpha == 0.0) {
        auto [loss, g] = detail::sft_eval(m, clo_batch, true);
        return detail::pack_result(m.spec, loss, std::move(g));
    }
    if (alpha == 1.0) {
        auto [loss, g] = detail::it_eval(m, pi_batch, true);
        return detail::pack_result(m.spec, loss, std::move(g));
    }
    auto [it_loss, it_g] = detail::it_eval(m, pi_batch, true);
    auto [sft_loss, sft_g] = detail::sft_eval(m, clo_batch, true);
    detail::Grads g(m.spec);
    g.add_scaled(it_g, alpha);
    g.add_scaled(sft_g, 1.0 - alpha);
    return detail::pack_result(m.spec, alpha * it_loss + (1.0 - alpha) * sft_loss, std::move(g));
}

/// Log-softmax over the vocabulary for the next token after `context_tokens`
/// (the last `context` of them; shorter contexts are left-padded with PAD).
inline std::vector<double> forward_logprobs(const Checkpoint& params,
                                            const std::vector<Token>& context_tokens) {
    const auto m = detail::ToyLm::from_checkpoint(params);
    const uint32_t n = m.spec.context;
    std::vector<Token> window(n, tok::kPad);
    const size_t take = std::min<size_t>(context_tokens.size(), n);
    std::copy(context_tokens.end() - static_cast<long>(take), context_tokens.end(),
              window.end() - static_cast<long>(take));
    detail::Scratch s(m.spec);
    detail::forward_window(m, window.data(), s);
    return s.logp;
}

struct TrainConfig {
    double learning_rate = 1e-2;
    uint32_t epochs = 1;
    uint32_t batch_size = 16;
    uint64_t seed = 0;
    double weight_decay = 0.0;
    double alpha = 0.3;  // PCBL weight

    void validate() const {
        if (!(learning_rate >= 0.0)) throw ValidationError("train: learning_rate must be >= 0");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("train: alpha out of [0,1]");
        if (epochs < 1 || batch_size < 1) throw ValidationError("train: epochs/batch_size must be >= 1");
    }
};

/// lr = 2e-5, 5 epochs, bs 256 is the published large-model recipe; the toy
/// default is what the desk-scale model actually needs.
inline TrainConfig train_preset(const std::string& name) {
    TrainConfig cfg;
    if (name == "paper") {
        cfg.learning_rate = 2e-5;
        cfg.epochs = 5;
        cfg.batch_size = 256;
    } else if (name == "toy") {
        cfg.learning_rate = 1e-2;
        cfg.epochs = 3;
        cfg.batch_size = 16;
    } else {
        throw ValidationError("unknown train preset: " + name);
    }
    return cfg;
}

enum class LossKind { sft, it, pcbl };

/// Training source; `sequences` feeds L_SFT, `pairs` feeds L_IT, PCBL uses
/// both.
struct TrainData {
    std::vector<std::vector<Token>> sequences;
    std::vector<TokenizedPair> pairs;
};

/// Deterministic random parameter init for the given architecture.
inline Checkpoint init_params(const ToyLmSpec& spec, uint64_t seed) {
    spec.validate();
    detail::ToyLm m;
    m.spec = spec;
    SplitMix rng(derive_seed(seed, "toylm-init"));
    const size_t v = spec.vocab_size, d = spec.embed_dim, n = spec.context, h = spec.hidden_dim;
    auto fill = [&](std::vector<double>& dst, size_t count, double range) {
        dst.resize(count);
        for (auto& x : dst) x = rng.next_symmetric(range);
    };
    fill(m.emb, v * d, 0.1);
    fill(m.w1, n * d * h, 1.0 / std::sqrt(static_cast<double>(n) * d));
    fill(m.w2, h * v, 1.0 / std::sqrt(static_cast<double>(h)));
    m.b1.assign(h, 0.0);
    m.b2.assign(v, 0.0);
    return m.to_checkpoint();
}

namespace detail {

struct AdamW {
    double lr, wd;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    uint64_t t = 0;
    Grads m, v;

    AdamW(const ToyLmSpec& spec, double lr_, double wd_) : lr(lr_), wd(wd_), m(spec), v(spec) {}

    void step(ToyLm& model, const Grads& g) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        auto update = [&](std::vector<double>& w, std::vector<double>& gm, std::vector<double>& gv,
                          const std::vector<double>& grad) {
            for (size_t i = 0; i < w.size(); ++i) {
                gm[i] = beta1 * gm[i] + (1.0 - beta1) * grad[i];
                gv[i] = beta2 * gv[i] + (1.0 - beta2) * grad[i] * grad[i];
                const double mhat = gm[i] / bc1;
                const double vhat = gv[i] / bc2;
                w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * w[i]);
            }
        };
        update(model.emb, m.emb, v.emb, g.emb);
        update(model.w1, m.w1, v.w1, g.w1);
        update(model.b1, m.b1, v.b1, g.b1);
        update(model.w2, m.w2, v.w2, g.w2);
        update(model.b2, m.b2, v.b2, g.b2);
    }
};

}  // namespace detail

/// Epoch/step metrics for callers that want to watch training.
struct TrainStats {
    std::vector<double> epoch_mean_loss;
};

/// Runs epochs of shuffled mini-batches with AdamW. Pure function of
/// (params, data, config): the input checkpoint is untouched and equal seeds
/// give bit-identical results. Throws on a non-finite loss, naming the step.
inline Checkpoint train(const Checkpoint& params, const TrainData& data, LossKind kind,
                        const TrainConfig& cfg, TrainStats* stats = nullptr) {
    cfg.validate();
    auto m = detail::ToyLm::from_checkpoint(params);
    const bool need_seq = (kind == LossKind::sft) || (kind == LossKind::pcbl && cfg.alpha < 1.0);
    const bool need_pairs = (kind == LossKind::it) || (kind == LossKind::pcbl && cfg.alpha > 0.0);
    if (need_seq && data.sequences.empty()) throw ValidationError("train: no sequences provided");
    if (need_pairs && data.pairs.empty()) throw ValidationError("train: no pairs provided");

    detail::AdamW opt(m.spec, cfg.learning_rate, cfg.weight_decay);
    SplitMix rng(derive_seed(cfg.seed, "train-shuffle"));
    detail::Scratch scratch(m.spec);

    std::vector<uint32_t> seq_order(data.sequences.size());
    std::vector<uint32_t> pair_order(data.pairs.size());
    for (uint32_t i = 0; i < seq_order.size(); ++i) seq_order[i] = i;
    for (uint32_t i = 0; i < pair_order.size(); ++i) pair_order[i] = i;

    const size_t primary = std::max(need_seq ? data.sequences.size() : 0,
                                    need_pairs ? data.pairs.size() : 0);
    const size_t steps_per_epoch = (primary + cfg.batch_size - 1) / cfg.batch_size;

    uint64_t global_step = 0;
    for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (need_seq) rng.shuffle(seq_order);
        if (need_pairs) rng.shuffle(pair_order);
        size_t seq_cursor = 0, pair_cursor = 0;
        double epoch_loss = 0.0;

        for (size_t step = 0; step < steps_per_epoch; ++step) {
            detail::Grads g(m.spec);
            detail::LossAccum seq_acc, pair_acc;
            detail::Grads seq_g(m.spec), pair_g(m.spec);

            if (need_seq) {
                for (uint32_t b = 0; b < cfg.batch_size; ++b) {
                    const auto& seq = data.sequences[seq_order[seq_cursor % seq_order.size()]];
                    ++seq_cursor;
                    detail::eval_sequence(m, seq, scratch, &seq_g, seq_acc);
                }
            }
            if (need_pairs) {
                for (uint32_t b = 0; b < cfg.batch_size; ++b) {
                    const auto& pair = data.pairs[pair_order[pair_cursor % pair_order.size()]];
                    ++pair_cursor;
                    detail::eval_pair(m, pair, scratch, &pair_g, pair_acc);
                }
            }

            double loss = 0.0;
            if (kind == LossKind::sft) {
                loss = seq_acc.nll_sum / static_cast<double>(seq_acc.count);
                seq_g.scale(1.0 / static_cast<double>(seq_acc.count));
                g = std::move(seq_g);
            } else if (kind == LossKind::it) {
                loss = pair_acc.nll_sum / static_cast<double>(pair_acc.count);
                pair_g.scale(1.0 / static_cast<double>(pair_acc.count));
                g = std::move(pair_g);
            } else {
                double it_loss = 0.0, sft_loss = 0.0;
                if (need_pairs) {
                    it_loss = pair_acc.nll_sum / static_cast<double>(pair_acc.count);
                    pair_g.scale(cfg.alpha / static_cast<double>(pair_acc.count));
                    g.add_scaled(pair_g, 1.0);
                }
                if (need_seq) {
                    sft_loss = seq_acc.nll_sum / static_cast<double>(seq_acc.count);
                    seq_g.scale((1.0 - cfg.alpha) / static_cast<double>(seq_acc.count));
                    g.add_scaled(seq_g, 1.0);
                }
                loss = cfg.alpha * it_loss + (1.0 - cfg.alpha) * sft_loss;
            }

            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at step " +
                                         std::to_string(global_step));
            opt.step(m, g);
            ++global_step;
            epoch_loss += loss;
        }
        if (stats) stats->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
    }
    return m.to_checkpoint();
}

namespace detail {

inline std::vector<Token> generate_tokens(const ToyLm& m, std::vector<Token> tokens,
                                          uint32_t max_tokens) {
    const uint32_t n = m.spec.context;
    Scratch s(m.spec);
    std::vector<Token> out;
    std::vector<Token> window(n, tok::kPad);
    for (uint32_t step = 0; step < max_tokens; ++step) {
        const size_t take = std::min<size_t>(tokens.size(), n);
        std::fill(window.begin(), window.end(), tok::kPad);
        std::copy(tokens.end() - static_cast<long>(take), tokens.end(),
                  window.end() - static_cast<long>(take));
        forward_window(m, window.data(), s);
        Token best = 0;
        double best_lp = s.logp[0];
        for (uint32_t u = 1; u < m.spec.vocab_size; ++u) {
            if (s.logp[u] > best_lp) {  // ties keep the lowest token id
                best_lp = s.logp[u];
                best = static_cast<Token>(u);
            }
        }
        out.push_back(best);
        tokens.push_back(best);
        if (best == tok::kEos) break;
    }
    return out;
}

}  // namespace detail

/// Greedy (argmax) decoding from prompt tokens until EOS or max_tokens.
inline std::vector<Token> greedy_generate_tokens(const Checkpoint& params,
                                                 const std::vector<Token>& prompt_tokens,
                                                 uint32_t max_tokens) {
    if (max_tokens < 1) throw ValidationError("generate: max_tokens must be >= 1");
    const auto m = detail::ToyLm::from_checkpoint(params);
    return detail::generate_tokens(m, prompt_tokens, max_tokens);
}

inline std::string greedy_generate(const Checkpoint& params, std::string_view prompt,
                                   uint32_t max_tokens) {
    return detokenize(greedy_generate_tokens(params, tokenize(prompt), max_tokens));
}

/// Greedy chat completion: serializes system/user turns and decodes the
/// assistant turn.
inline std::string greedy_chat(const Checkpoint& params, std::string_view system,
                               std::string_view user, uint32_t max_tokens) {
    return detokenize(greedy_generate_tokens(params, render_prompt(system, user), max_tokens));
}

struct SequenceNll {
    double total_nll = 0.0;
    uint64_t token_count = 0;

    double mean() const { return total_nll / static_cast<double>(token_count); }
};

/// Inference-only wrapper around a checkpoint. Precomputes the per-slot
/// embedding projections U[slot][token] = W1_slot^T emb[token], which turns
/// the first layer into a table lookup during decoding and scoring.
class LmEngine {
public:
    explicit LmEngine(const Checkpoint& params) : m_(detail::ToyLm::from_checkpoint(params)) {
        const size_t n = m_.spec.context, d = m_.spec.embed_dim, h = m_.spec.hidden_dim,
                     v = m_.spec.vocab_size;
        u_.assign(n * v * h, 0.0);
        for (size_t p = 0; p < n; ++p) {
            for (size_t t = 0; t < v; ++t) {
                double* dst = &u_[(p * v + t) * h];
                const double* e = &m_.emb[t * d];
                for (size_t q = 0; q < d; ++q) {
                    const double eq = e[q];
                    const double* w = &m_.w1[(p * d + q) * h];
                    for (size_t k = 0; k < h; ++k) dst[k] += eq * w[k];
                }
            }
        }
        act_.resize(h);
        z_.resize(v);
    }

    const ToyLmSpec& spec() const { return m_.spec; }

    std::vector<Token> generate_tokens(std::vector<Token> tokens, uint32_t max_tokens) const {
        if (max_tokens < 1) throw ValidationError("generate: max_tokens must be >= 1");
        const uint32_t n = m_.spec.context;
        std::vector<Token> window(n, tok::kPad);
        std::vector<Token> out;
        for (uint32_t step = 0; step < max_tokens; ++step) {
            std::fill(window.begin(), window.end(), tok::kPad);
            const size_t take = std::min<size_t>(tokens.size(), n);
            std::copy(tokens.end() - static_cast<long>(take), tokens.end(),
                      window.end() - static_cast<long>(take));
            logits(window.data());
            Token best = 0;
            double best_z = z_[0];
            for (uint32_t uu = 1; uu < m_.spec.vocab_size; ++uu) {
                if (z_[uu] > best_z) {
                    best_z = z_[uu];
                    best = static_cast<Token>(uu);
                }
            }
            out.push_back(best);
            tokens.push_back(best);
            if (best == tok::kEos) break;
        }
        return out;
    }

    std::string generate(std::string_view prompt, uint32_t max_tokens) const {
        return detokenize(generate_tokens(tokenize(prompt), max_tokens));
    }

    std::string chat(std::string_view system, std::string_view user, uint32_t max_tokens) const {
        return detokenize(generate_tokens(render_prompt(system, user), max_tokens));
    }

    SequenceNll nll(std::string_view text) const {
        if (text.empty()) throw ValidationError("sequence_nll: empty text");
        std::vector<Token> seq;
        seq.push_back(tok::kBos);
        for (Token t : tokenize(text)) seq.push_back(t);
        const std::vector<Token> padded = detail::pad_left(seq, m_.spec.context);
        SequenceNll r;
        for (size_t t = 1; t < seq.size(); ++t) {
            logits(&padded[t]);
            const uint32_t v = m_.spec.vocab_size;
            double mx = z_[0];
            for (uint32_t uu = 1; uu < v; ++uu) mx = std::max(mx, z_[uu]);
            double sum = 0.0;
            for (uint32_t uu = 0; uu < v; ++uu) sum += std::exp(z_[uu] - mx);
            r.total_nll += mx + std::log(sum) - z_[seq[t]];
            r.token_count += 1;
        }
        return r;
    }

private:
    void logits(const Token* ctx) const {
        const size_t n = m_.spec.context, h = m_.spec.hidden_dim, v = m_.spec.vocab_size;
        std::copy(m_.b1.begin(), m_.b1.end(), act_.begin());
        for (size_t p = 0; p < n; ++p) {
            const double* row = &u_[(p * v + ctx[p]) * h];
            for (size_t k = 0; k < h; ++k) act_[k] += row[k];
        }
        std::copy(m_.b2.begin(), m_.b2.end(), z_.begin());
        for (size_t k = 0; k < h; ++k) {
            const double hk = std::tanh(act_[k]);
            const double* w = &m_.w2[k * v];
            for (size_t uu = 0; uu < v; ++uu) z_[uu] += hk * w[uu];
        }
    }

    detail::ToyLm m_;
    std::vector<double> u_;  // [context][vocab][hidden]
    mutable std::vector<double> act_, z_;
};

/// Sum of next-token NLLs over the tokenized text (conditioned on BOS).
inline SequenceNll sequence_nll(const Checkpoint& params, std::string_view text) {
    if (text.empty()) throw ValidationError("sequence_nll: empty text");
    const auto m = detail::ToyLm::from_checkpoint(params);
    std::vector<Token> seq;
    seq.push_back(tok::kBos);
    for (Token t : tokenize(text)) seq.push_back(t);
    detail::Scratch s(m.spec);
    detail::LossAccum acc;
    detail::eval_sequence(m, seq, s, nullptr, acc);
    return {acc.nll_sum, acc.count};
}

}  // namespace phimm
