// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "phimm/attacks.hpp"
#include "phimm/checkpoint_io.hpp"
#include "phimm/fingerprint.hpp"
#include "phimm/hash.hpp"
#include "phimm/jsonl.hpp"
#include "phimm/merging.hpp"
#include "phimm/privdata.hpp"
#include "phimm/toylm.hpp"

// End-to-end experiment: pretrain a base model, build the attacker's support
// and (cloaked) phishing models, train the victim's private model, merge,
// then attack the victim model before and after merging and report the
// deltas. Every stage draws from a named sub-seed, so a (config, seed) pair
// reproduces byte-identical artifacts.

namespace phimm {

struct PipelineConfig {
    uint64_t seed = 0;
    std::string attack_kind = "dea";  // dea | mia
    // recollection defaults depend on the attack kind (see resolve()); an
    // explicit setting wins
    std::optional<bool> recollection;
    bool cloak = true;
    double alpha = 0.3;

    // corpus sizes
    uint64_t n_aux = 300;             // attacker auxiliary (MIA: attacker members)
    uint64_t n_aux_nonmember = 300;   // attacker-held nonmembers (MIA dataset)
    uint64_t n_victim = 300;
    uint64_t n_nonmember_eval = 100;
    uint64_t n_pretrain = 120;       // generic world texts
    uint64_t n_pretrain_chat = 176;  // generic instruct pairs (base is chat-capable)
    uint64_t n_cloak = 200;
    uint64_t n_cloak_heldout = 60;

    // evaluation caps (records actually queried)
    uint64_t dea_eval = 120;
    uint64_t mia_eval_members = 100;
    uint64_t mia_baseline_eval = 60;  // LiRA / neighborhood subset per side
    uint32_t n_neighbors = 4;

    // model architecture
    ToyLmSpec model;

    // data profile: categorical types drawn from shared world pools. The
    // identity-bearing types (PERSON, EMAIL_ADDRESS, PHONE_NUMBER) are
    // available through custom profiles; their values are partitioned
    // between the attacker and victim splits.
    std::map<std::string, double> pii_profile = {
        {"DATE_TIME", 1.0}, {"NRP", 1.0}, {"LOCATION", 0.25}};
    bool allow_entity_overlap = false;  // share person/email/phone identities across splits

    // The attacker ends its own training texts with a sentinel clause, so
    // continuations trained at text-end (the recollection exit) live on
    // windows the victim's corpus never touches.
    std::string aux_terminal_clause = " End of file.";

    MergeConfig merge;

    TrainConfig pretrain_train{1e-2, 6, 16, 0, 0.0, 0.5};
    TrainConfig support_train{4e-3, 2, 16, 0, 0.0, 0.3};
    TrainConfig phish_train{1e-2, 8, 16, 0, 0.0, 0.3};
    TrainConfig cloak_train{4e-3, 1, 16, 0, 0.0, 0.3};
    TrainConfig victim_train{2e-3, 2, 16, 0, 0.0, 0.3};

    // generation budgets
    uint32_t dea_max_tokens = 220;
    uint32_t mia_max_tokens = 220;
    uint32_t baseline_max_tokens = 48;

    uint32_t jobs = 1;  // worker cap; results are independent of it

    // Optional cache for the pretrained base: the base depends only on the
    // seed, the sizes, and the pretrain recipe, so repeated runs (e.g. the
    // dea and mia arms of one seed) can share it. Cache hits reproduce the
    // uncached bytes exactly.
    std::filesystem::path base_cache_dir;

    PipelineConfig() {
        merge.method = MergeMethod::linear;
        merge.coefficients = {0.5, 0.5};
    }

    bool recollection_resolved() const {
        // Recollection is the paper's default for DEA. For MIA at this model
        // scale the recollection segment pushes the sample text out of the
        // context window before the answer starts, which severs the only
        // query-specific signal path, so the MIA arm defaults to the plain
        // phishing prompt.
        if (recollection.has_value()) return *recollection;
        return attack_kind == "dea";
    }

    void validate() const {
        if (attack_kind != "dea" && attack_kind != "mia")
            throw ValidationError("pipeline: attack kind must be dea or mia");
        if (n_aux < 1 || n_victim < 1 || n_nonmember_eval < 1)
            throw ValidationError("pipeline: corpus sizes must be >= 1");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("pipeline: alpha out of [0,1]");
        pretrain_train.validate();
        support_train.validate();
        phish_train.validate();
        cloak_train.validate();
        victim_train.validate();
        merge.validate(merge.coefficients.size());
        model.validate();
    }
};

struct AttackRunReport {
    std::string method;
    std::string model_name;
    uint64_t n = 0;
    std::optional<double> asr;
    std::optional<double> auc;
    uint64_t mismatches = 0;
    uint64_t skipped = 0;
    std::map<std::string, double> per_type_asr;
    nlohmann::json samples = nlohmann::json::array();
};

struct PipelineResult {
    std::string attack_kind;
    uint64_t seed = 0;
    bool recollection = false;
    bool cloak = false;
    // phishing-instruction headline metrics
    std::optional<double> before_metric;  // ASR for dea, AUC for mia
    std::optional<double> after_metric;
    std::optional<double> improvement_pct;  // (after-before)/before * 100
    uint64_t before_mismatches = 0;
    uint64_t after_mismatches = 0;
    double fingerprint_ratio_victim = 0.0;
    double fingerprint_ratio_merged = 0.0;
    bool fingerprint_verdict_victim = false;
    bool fingerprint_verdict_merged = false;
    double cloak_heldout_nll_victim = 0.0;
    double cloak_heldout_nll_merged = 0.0;
    std::vector<AttackRunReport> reports;
    std::filesystem::path out_dir;
};

namespace detail {

inline nlohmann::json attack_report_json(const AttackRunReport& r) {
    nlohmann::json j;
    j["method"] = r.method;
    j["model"] = r.model_name;
    j["n"] = r.n;
    j["asr"] = r.asr ? nlohmann::json(*r.asr) : nlohmann::json(nullptr);
    j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
    j["mismatches"] = r.mismatches;
    j["skipped"] = r.skipped;
    j["per_type_asr"] = r.per_type_asr;
    j["samples"] = r.samples;
    return j;
}

inline std::string csv_field(std::optional<double> v) {
    return v ? std::to_string(*v) : std::string{};
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open for writing: " + path.string());
    f << content;
}

inline std::string label_name(MiaLabel label) {
    switch (label) {
        case MiaLabel::member: return "member";
        case MiaLabel::nonmember: return "nonmember";
        default: return "mismatch";
    }
}

}  // namespace detail

/// DEA attack battery for one model: phishing instruction plus the prefix
/// and prompt baselines.
inline std::vector<AttackRunReport> run_dea_attacks(const LmEngine& engine,
                                                    const std::string& model_name,
                                                    const std::vector<PrivacyRecord>& eval_records,
                                                    bool recollection, const PipelineConfig& cfg,
                                                    std::vector<std::string>* phishing_responses) {
    std::vector<AttackRunReport> out;

    auto summarize = [&](const std::string& method, const std::vector<DeaPrediction>& preds,
                         MatchRule rule) {
        AttackRunReport rep;
        rep.method = method;
        rep.model_name = model_name;
        const AsrResult r = asr(preds, eval_records, rule);
        rep.n = r.n;
        rep.skipped = r.skipped;
        rep.asr = r.overall;
        rep.per_type_asr = r.per_type;
        for (const auto& p : preds) {
            nlohmann::json s;
            s["record_id"] = p.record_id;
            s["skipped"] = p.skipped;
            s["extracted"] = p.extracted;
            rep.samples.push_back(std::move(s));
        }
        out.push_back(std::move(rep));
    };

    std::vector<DeaPrediction> phishing, prefix, prompt;
    for (const auto& rec : eval_records) {
        phishing.push_back(phishing_dea_attack(engine, rec, recollection, cfg.dea_max_tokens));
        if (phishing_responses) phishing_responses->push_back(phishing.back().raw_response);
        prefix.push_back(prefix_attack(engine, rec, cfg.baseline_max_tokens));
        prompt.push_back(prompt_attack(engine, rec, cfg.baseline_max_tokens));
    }
    summarize("phishing_instruction", phishing, MatchRule::exact_extracted);
    summarize("prefix", prefix, MatchRule::substring_raw);
    summarize("prompt", prompt, MatchRule::substring_raw);
    return out;
}

/// MIA attack battery: phishing instruction on the full eval split, LiRA and
/// neighborhood baselines on a smaller subset.
inline std::vector<AttackRunReport> run_mia_attacks(const LmEngine& engine,
                                                    const LmEngine& reference,
                                                    const std::string& model_name,
                                                    const std::vector<PrivacyRecord>& members,
                                                    const std::vector<PrivacyRecord>& nonmembers,
                                                    bool recollection, const PipelineConfig& cfg,
                                                    std::vector<std::string>* phishing_responses) {
    std::vector<AttackRunReport> out;

    auto summarize = [&](const std::string& method, const std::vector<MiaScoredSample>& samples) {
        AttackRunReport rep;
        rep.method = method;
        rep.model_name = model_name;
        rep.n = samples.size();
        rep.auc = auc(samples);
        rep.mismatches = count_mismatches(samples);
        for (const auto& s : samples) {
            nlohmann::json j;
            j["record_id"] = s.record_id;
            j["score"] = s.score;
            j["truth"] = s.truth;
            if (s.hard_label) j["label"] = detail::label_name(*s.hard_label);
            rep.samples.push_back(std::move(j));
        }
        out.push_back(std::move(rep));
    };

    std::vector<MiaScoredSample> phishing;
    for (const auto& rec : members) {
        phishing.push_back(phishing_mia_attack(engine, rec, recollection, cfg.mia_max_tokens));
        if (phishing_responses) {
            const MiaQuery q = build_mia_query(rec.text, recollection);
            phishing_responses->push_back(engine.chat(q.system, q.user, cfg.mia_max_tokens));
        }
    }
    for (const auto& rec : nonmembers) {
        phishing.push_back(phishing_mia_attack(engine, rec, recollection, cfg.mia_max_tokens));
    }
    summarize("phishing_instruction", phishing);

    const size_t k = cfg.mia_baseline_eval;
    std::vector<MiaScoredSample> lira, neigh;
    auto baseline_side = [&](const std::vector<PrivacyRecord>& side, bool truth) {
        for (size_t i = 0; i < side.size() && i < k; ++i) {
            const auto& rec = side[i];
            MiaScoredSample ls = lira_score(engine.nll(rec.text).mean(),
                                            reference.nll(rec.text).mean());
            ls.record_id = rec.id;
            ls.truth = truth;
            lira.push_back(ls);
            MiaScoredSample ns = neighborhood_score(engine, rec.text, cfg.n_neighbors,
                                                    derive_seed(cfg.seed, "neighborhood"));
            ns.record_id = rec.id;
            ns.truth = truth;
            neigh.push_back(ns);
        }
    };
    baseline_side(members, true);
    baseline_side(nonmembers, false);
    summarize("lira", lira);
    summarize("neighborhood", neigh);
    return out;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "corpora");
    fs::create_directories(out_dir / "datasets");
    fs::create_directories(out_dir / "checkpoints");
    fs::create_directories(out_dir / "reports");

    const bool recollection = cfg.recollection_resolved();
    const bool is_dea = cfg.attack_kind == "dea";
    const int attacker_partition = cfg.allow_entity_overlap ? 0 : 1;
    const int victim_partition = cfg.allow_entity_overlap ? 0 : 2;

    // ---- stage 1: pretrained instruct base ----------------------------------
    // mixed objective: generic world text plus generic chat pairs, so the
    // base both models the clause grammar and answers after the AST token
    const auto pretrain_texts = generate_pretrain_texts(cfg.n_pretrain,
                                                        derive_seed(cfg.seed, "pretrain-corpus"));
    const auto instruct_pairs =
        generate_instruct_pairs(cfg.n_pretrain_chat, derive_seed(cfg.seed, "instruct-corpus"));
    TrainData pretrain_data;
    for (const auto& t : pretrain_texts) {
        // no terminal EOS: the base models world text as continuable; only
        // chat answers teach it to stop
        std::vector<Token> seq;
        seq.push_back(tok::kBos);
        for (Token tkn : tokenize(t)) seq.push_back(tkn);
        pretrain_data.sequences.push_back(std::move(seq));
    }
    for (const auto& ex : instruct_pairs)
        pretrain_data.pairs.push_back(make_chat_pair(ex.system, ex.user, ex.assistant));
    TrainConfig pre_cfg = cfg.pretrain_train;
    pre_cfg.seed = derive_seed(cfg.seed, "pretrain");
    Checkpoint base;
    std::filesystem::path cache_file;
    if (!cfg.base_cache_dir.empty()) {
        char key[64];
        std::snprintf(key, sizeof(key), "base-%016llx-%u-%u-%u.phmm",
                      static_cast<unsigned long long>(
                          splitmix64(cfg.seed ^ fnv1a64_u64(cfg.n_pretrain) ^
                                     fnv1a64_u64(cfg.n_pretrain_chat) ^
                                     fnv1a64_u64(static_cast<uint64_t>(pre_cfg.epochs)))),
                      cfg.model.context, cfg.model.embed_dim, cfg.model.hidden_dim);
        cache_file = cfg.base_cache_dir / key;
    }
    if (!cache_file.empty() && std::filesystem::exists(cache_file)) {
        base = load_checkpoint(cache_file.string());
    } else {
        base = train(init_params(cfg.model, derive_seed(cfg.seed, "init")), pretrain_data,
                     LossKind::pcbl, pre_cfg);
        if (!cache_file.empty()) {
            std::filesystem::create_directories(cfg.base_cache_dir);
            save_checkpoint(base, cache_file.string());
        }
    }
    save_checkpoint(base, (out_dir / "checkpoints/base.phmm").string());

    // ---- stage 2: attacker support model on D_Aux --------------------------
    CorpusOptions aux_opt;
    aux_opt.n_records = cfg.n_aux;
    aux_opt.pii_profile = cfg.pii_profile;
    aux_opt.seed = derive_seed(cfg.seed, "aux-corpus");
    aux_opt.entity_partition = attacker_partition;
    aux_opt.terminal_clause = cfg.aux_terminal_clause;
    auto aux_records = generate_corpus(aux_opt);
    for (auto& r : aux_records) r.is_member = true;
    write_records(aux_records, (out_dir / "corpora/aux.jsonl").string());

    TrainData support_data;
    for (const auto& r : aux_records) support_data.sequences.push_back(make_sft_sequence(r.text));
    TrainConfig support_cfg = cfg.support_train;
    support_cfg.seed = derive_seed(cfg.seed, "support");
    const Checkpoint support = train(base, support_data, LossKind::sft, support_cfg);
    save_checkpoint(support, (out_dir / "checkpoints/support.phmm").string());

    // ---- stage 3: phishing instruction dataset and model -------------------
    std::vector<PhishingExample> phishing_ds;
    if (is_dea) {
        phishing_ds = build_dea_dataset(aux_records, recollection);
    } else {
        CorpusOptions aux_non_opt = aux_opt;
        aux_non_opt.n_records = cfg.n_aux_nonmember;
        aux_non_opt.seed = derive_seed(cfg.seed, "aux-nonmember-corpus");
        auto aux_nonmembers = generate_corpus(aux_non_opt);
        write_records(aux_nonmembers, (out_dir / "corpora/aux_nonmember.jsonl").string());
        phishing_ds = build_mia_dataset(aux_records, aux_nonmembers, recollection);
    }
    write_examples(phishing_ds, (out_dir / "datasets/phishing.jsonl").string());

    TrainData phish_data;
    for (const auto& ex : phishing_ds)
        phish_data.pairs.push_back(make_chat_pair(ex.system, ex.user, ex.assistant));
    TrainConfig phish_cfg = cfg.phish_train;
    phish_cfg.seed = derive_seed(cfg.seed, "phish");
    const Checkpoint phish = train(support, phish_data, LossKind::it, phish_cfg);
    save_checkpoint(phish, (out_dir / "checkpoints/phish.phmm").string());

    // ---- stage 4: cloak with PCBL ------------------------------------------
    const auto cloak_texts = generate_cloak_texts(cfg.n_cloak, derive_seed(cfg.seed, "cloak-corpus"));
    const auto cloak_heldout =
        generate_cloak_texts(cfg.n_cloak_heldout, derive_seed(cfg.seed, "cloak-heldout"));
    Checkpoint phish_final = phish;
    if (cfg.cloak) {
        TrainData cloak_data = phish_data;  // PCBL revisits the phishing pairs
        for (const auto& t : cloak_texts) cloak_data.sequences.push_back(make_sft_sequence(t));
        TrainConfig cloak_cfg = cfg.cloak_train;
        cloak_cfg.alpha = cfg.alpha;
        cloak_cfg.seed = derive_seed(cfg.seed, "cloak");
        phish_final = train(phish, cloak_data, LossKind::pcbl, cloak_cfg);
    }
    save_checkpoint(phish_final, (out_dir / "checkpoints/phish_final.phmm").string());

    // ---- stage 5: victim private model -------------------------------------
    CorpusOptions victim_opt;
    victim_opt.n_records = cfg.n_victim;
    victim_opt.pii_profile = cfg.pii_profile;
    victim_opt.seed = derive_seed(cfg.seed, "victim-corpus");
    victim_opt.entity_partition = victim_partition;
    auto victim_records = generate_corpus(victim_opt);
    for (auto& r : victim_records) r.is_member = true;
    write_records(victim_records, (out_dir / "corpora/victim.jsonl").string());

    CorpusOptions eval_opt = victim_opt;
    eval_opt.n_records = cfg.n_nonmember_eval;
    eval_opt.seed = derive_seed(cfg.seed, "nonmember-eval-corpus");
    auto nonmember_records = generate_corpus(eval_opt);
    write_records(nonmember_records, (out_dir / "corpora/nonmember_eval.jsonl").string());

    TrainData victim_data;
    for (const auto& r : victim_records) victim_data.sequences.push_back(make_sft_sequence(r.text));
    TrainConfig victim_cfg = cfg.victim_train;
    victim_cfg.seed = derive_seed(cfg.seed, "victim");
    const Checkpoint victim = train(base, victim_data, LossKind::sft, victim_cfg);
    save_checkpoint(victim, (out_dir / "checkpoints/victim.phmm").string());

    // ---- stage 6: merge -----------------------------------------------------
    const Checkpoint merged = merge(&base, {victim, phish_final}, cfg.merge);
    save_checkpoint(merged, (out_dir / "checkpoints/merged.phmm").string());

    // ---- stage 7: attacks before and after ----------------------------------
    const LmEngine victim_engine(victim);
    const LmEngine merged_engine(merged);
    const LmEngine base_engine(base);

    PipelineResult result;
    result.attack_kind = cfg.attack_kind;
    result.seed = cfg.seed;
    result.recollection = recollection;
    result.cloak = cfg.cloak;
    result.out_dir = out_dir;

    std::vector<std::string> victim_responses, merged_responses;
    if (is_dea) {
        std::vector<PrivacyRecord> eval_records(
            victim_records.begin(),
            victim_records.begin() +
                static_cast<long>(std::min<uint64_t>(cfg.dea_eval, victim_records.size())));
        auto before = run_dea_attacks(victim_engine, "victim", eval_records, recollection, cfg,
                                      &victim_responses);
        auto after = run_dea_attacks(merged_engine, "merged", eval_records, recollection, cfg,
                                     &merged_responses);
        result.before_metric = before[0].asr;
        result.after_metric = after[0].asr;
        for (auto& r : before) result.reports.push_back(std::move(r));
        for (auto& r : after) result.reports.push_back(std::move(r));
    } else {
        std::vector<PrivacyRecord> eval_members(
            victim_records.begin(),
            victim_records.begin() +
                static_cast<long>(std::min<uint64_t>(cfg.mia_eval_members, victim_records.size())));
        auto before = run_mia_attacks(victim_engine, base_engine, "victim", eval_members,
                                      nonmember_records, recollection, cfg, &victim_responses);
        auto after = run_mia_attacks(merged_engine, base_engine, "merged", eval_members,
                                     nonmember_records, recollection, cfg, &merged_responses);
        result.before_metric = before[0].auc;
        result.after_metric = after[0].auc;
        result.before_mismatches = before[0].mismatches;
        result.after_mismatches = after[0].mismatches;
        for (auto& r : before) result.reports.push_back(std::move(r));
        for (auto& r : after) result.reports.push_back(std::move(r));
    }

    if (result.before_metric && result.after_metric && *result.before_metric > 0.0) {
        result.improvement_pct =
            (*result.after_metric - *result.before_metric) / *result.before_metric * 100.0;
    }

    // ---- stage 8: fingerprint ------------------------------------------------
    const FingerprintReport fp_victim = fingerprint(victim_responses);
    const FingerprintReport fp_merged = fingerprint(merged_responses);
    result.fingerprint_ratio_victim =
        static_cast<double>(fp_victim.marker_count) / static_cast<double>(fp_victim.n_queries);
    result.fingerprint_ratio_merged =
        static_cast<double>(fp_merged.marker_count) / static_cast<double>(fp_merged.n_queries);
    result.fingerprint_verdict_victim = fp_victim.verdict;
    result.fingerprint_verdict_merged = fp_merged.verdict;

    // ---- cloak capability (held-out task loss) -------------------------------
    auto heldout_nll = [&](const LmEngine& engine) {
        double acc = 0.0;
        for (const auto& t : cloak_heldout) acc += engine.nll(t).mean();
        return acc / static_cast<double>(cloak_heldout.size());
    };
    result.cloak_heldout_nll_victim = heldout_nll(victim_engine);
    result.cloak_heldout_nll_merged = heldout_nll(merged_engine);

    // ---- reports --------------------------------------------------------------
    nlohmann::json before_j = nlohmann::json::array();
    nlohmann::json after_j = nlohmann::json::array();
    std::string csv = "method,model,dataset,n,asr,auc,mismatches\n";
    for (const auto& r : result.reports) {
        (r.model_name == "victim" ? before_j : after_j).push_back(detail::attack_report_json(r));
        csv += r.method + "," + r.model_name + ",synthetic," + std::to_string(r.n) + "," +
               detail::csv_field(r.asr) + "," + detail::csv_field(r.auc) + "," +
               std::to_string(r.mismatches) + "\n";
    }
    detail::write_text(out_dir / "reports/report_before.json", before_j.dump(2) + "\n");
    detail::write_text(out_dir / "reports/report_after.json", after_j.dump(2) + "\n");
    detail::write_text(out_dir / "reports/summary.csv", csv);

    nlohmann::json fp_j;
    fp_j["victim"] = {{"n_queries", fp_victim.n_queries},
                      {"marker_count", fp_victim.marker_count},
                      {"marker", fp_victim.marker},
                      {"verdict", fp_victim.verdict}};
    fp_j["merged"] = {{"n_queries", fp_merged.n_queries},
                      {"marker_count", fp_merged.marker_count},
                      {"marker", fp_merged.marker},
                      {"verdict", fp_merged.verdict}};
    detail::write_text(out_dir / "reports/fingerprint.json", fp_j.dump(2) + "\n");

    nlohmann::json summary;
    summary["attack_kind"] = cfg.attack_kind;
    summary["seed"] = cfg.seed;
    summary["recollection"] = recollection;
    summary["cloak"] = cfg.cloak;
    summary["phishing_metric_before"] =
        result.before_metric ? nlohmann::json(*result.before_metric) : nlohmann::json(nullptr);
    summary["phishing_metric_after"] =
        result.after_metric ? nlohmann::json(*result.after_metric) : nlohmann::json(nullptr);
    summary["improvement_pct"] =
        result.improvement_pct ? nlohmann::json(*result.improvement_pct) : nlohmann::json(nullptr);
    summary["mismatches_before"] = result.before_mismatches;
    summary["mismatches_after"] = result.after_mismatches;
    summary["fingerprint_ratio_victim"] = result.fingerprint_ratio_victim;
    summary["fingerprint_ratio_merged"] = result.fingerprint_ratio_merged;
    summary["cloak_heldout_nll_victim"] = result.cloak_heldout_nll_victim;
    summary["cloak_heldout_nll_merged"] = result.cloak_heldout_nll_merged;
    detail::write_text(out_dir / "reports/pipeline_report.json", summary.dump(2) + "\n");

    // ---- manifest ---------------------------------------------------------------
    nlohmann::json manifest;
    manifest["config"] = {{"attack_kind", cfg.attack_kind},
                          {"seed", cfg.seed},
                          {"recollection", recollection},
                          {"cloak", cfg.cloak},
                          {"alpha", cfg.alpha}};
    nlohmann::json files = nlohmann::json::object();
    std::vector<std::string> rels;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), out_dir).generic_string();
        if (rel == "manifest.json") continue;
        rels.push_back(rel);
    }
    std::sort(rels.begin(), rels.end());
    for (const auto& rel : rels) {
        std::ifstream f(out_dir / rel, std::ios::binary);
        const std::string bytes((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
        char hex[32];
        std::snprintf(hex, sizeof(hex), "fnv64:%016llx",
                      static_cast<unsigned long long>(fnv1a64(bytes)));
        files[rel] = hex;
    }
    manifest["files"] = files;
    detail::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");

    return result;
}

// ---------------------------------------------------------------------------
// Declarative config file: flat key=value lines plus [section] headers for
// the merge block and the per-stage training blocks.
// ---------------------------------------------------------------------------

inline PipelineConfig parse_pipeline_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config: " + path);
    PipelineConfig cfg;
    std::string line, section;
    size_t lineno = 0;

    auto parse_bool = [&](const std::string& v) {
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ValidationError(path + ":" + std::to_string(lineno) + ": expected boolean, got " + v);
    };

    while (std::getline(f, line)) {
        ++lineno;
        const size_t comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        if (trimmed.front() == '[' && trimmed.back() == ']') {
            section = trimmed.substr(1, trimmed.size() - 2);
            continue;
        }
        const size_t eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = detail::trim(trimmed.substr(0, eq));
        const std::string value = detail::trim(trimmed.substr(eq + 1));

        auto train_block = [&](TrainConfig& tc) {
            if (key == "learning_rate") tc.learning_rate = std::stod(value);
            else if (key == "epochs") tc.epochs = static_cast<uint32_t>(std::stoul(value));
            else if (key == "batch_size") tc.batch_size = static_cast<uint32_t>(std::stoul(value));
            else if (key == "weight_decay") tc.weight_decay = std::stod(value);
            else throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
        };

        if (section.empty()) {
            if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "attack") cfg.attack_kind = value;
            else if (key == "recollection") cfg.recollection = parse_bool(value);
            else if (key == "cloak") cfg.cloak = parse_bool(value);
            else if (key == "alpha") cfg.alpha = std::stod(value);
            else if (key == "n_aux") cfg.n_aux = std::stoull(value);
            else if (key == "n_aux_nonmember") cfg.n_aux_nonmember = std::stoull(value);
            else if (key == "n_victim") cfg.n_victim = std::stoull(value);
            else if (key == "n_nonmember_eval") cfg.n_nonmember_eval = std::stoull(value);
            else if (key == "n_pretrain") cfg.n_pretrain = std::stoull(value);
            else if (key == "n_pretrain_chat") cfg.n_pretrain_chat = std::stoull(value);
            else if (key == "n_cloak") cfg.n_cloak = std::stoull(value);
            else if (key == "dea_eval") cfg.dea_eval = std::stoull(value);
            else if (key == "mia_eval_members") cfg.mia_eval_members = std::stoull(value);
            else if (key == "mia_baseline_eval") cfg.mia_baseline_eval = std::stoull(value);
            else if (key == "n_neighbors") cfg.n_neighbors = static_cast<uint32_t>(std::stoul(value));
            else if (key == "context") cfg.model.context = static_cast<uint32_t>(std::stoul(value));
            else if (key == "embed") cfg.model.embed_dim = static_cast<uint32_t>(std::stoul(value));
            else if (key == "hidden") cfg.model.hidden_dim = static_cast<uint32_t>(std::stoul(value));
            else if (key == "allow_entity_overlap") cfg.allow_entity_overlap = parse_bool(value);
            else if (key == "jobs") cfg.jobs = static_cast<uint32_t>(std::stoul(value));
            else throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
        } else if (section == "merge") {
            if (key == "method") cfg.merge.method = merge_method_from_string(value);
            else if (key == "coefficients") {
                cfg.merge.coefficients.clear();
                std::string rest = value;
                while (!rest.empty()) {
                    const size_t comma = rest.find(',');
                    cfg.merge.coefficients.push_back(std::stod(rest.substr(0, comma)));
                    if (comma == std::string::npos) break;
                    rest = rest.substr(comma + 1);
                }
            } else if (key == "density") cfg.merge.density = std::stod(value);
            else if (key == "drop_prob") cfg.merge.drop_prob = std::stod(value);
            else if (key == "seed") cfg.merge.seed = std::stoull(value);
            else throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
        } else if (section == "train.pretrain") {
            train_block(cfg.pretrain_train);
        } else if (section == "train.support") {
            train_block(cfg.support_train);
        } else if (section == "train.phish") {
            train_block(cfg.phish_train);
        } else if (section == "train.cloak") {
            train_block(cfg.cloak_train);
        } else if (section == "train.victim") {
            train_block(cfg.victim_train);
        } else {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown section " + section);
        }
    }
    return cfg;
}

}  // namespace phimm
