// SPDX-License-Identifier: Apache-2.0
//
// phimm: corpus generation, dataset building, training, merging, privacy
// attacks, fingerprinting, and the end-to-end pipeline experiment.
//
// Exit codes: 0 success, 2 validation error, 1 runtime error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "phimm/attacks.hpp"
#include "phimm/checkpoint_io.hpp"
#include "phimm/fingerprint.hpp"
#include "phimm/jsonl.hpp"
#include "phimm/merging.hpp"
#include "phimm/pipeline.hpp"
#include "phimm/privdata.hpp"
#include "phimm/toylm.hpp"

namespace {

using namespace phimm;

std::map<std::string, double> parse_profile(const std::vector<std::string>& entries) {
    std::map<std::string, double> profile;
    for (const auto& e : entries) {
        const size_t eq = e.find('=');
        if (eq == std::string::npos)
            throw ValidationError("profile entries must look like TYPE=FREQ: " + e);
        profile[e.substr(0, eq)] = std::stod(e.substr(eq + 1));
    }
    return profile;
}

int run(int argc, char** argv) {
    CLI::App app{"PhiMM desk-scale privacy attack laboratory"};
    app.require_subcommand(1);

    // ---- gen-corpus ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic private corpus");
    uint64_t gen_n = 100, gen_seed = 0;
    uint64_t gen_min_len = 0, gen_max_len = 0;
    int gen_partition = 0;
    bool gen_member = false;
    std::vector<std::string> gen_profile = {"DATE_TIME=0.65", "NRP=0.55", "LOCATION=0.30",
                                            "PERSON=0.10", "EMAIL_ADDRESS=0.06",
                                            "PHONE_NUMBER=0.04"};
    std::string gen_out;
    gen->add_option("--n", gen_n, "Number of records");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--profile", gen_profile, "TYPE=FREQ pairs (expected spans per record)");
    gen->add_option("--min-len", gen_min_len, "Keep records at least this long");
    gen->add_option("--max-len", gen_max_len, "Keep records at most this long (0 = no bound)");
    gen->add_option("--entity-partition", gen_partition, "0 full pools, 1/2 disjoint halves");
    gen->add_flag("--member", gen_member, "Mark all records as members");
    gen->add_option("--out", gen_out, "Output JSONL path")->required();

    // ---- build-dataset -------------------------------------------------------
    auto* bd = app.add_subcommand("build-dataset", "Build a phishing instruction dataset");
    std::string bd_kind = "dea", bd_corpus, bd_nonmembers, bd_out;
    bool bd_recollection = false, bd_no_recollection = false;
    bd->add_option("--kind", bd_kind, "dea or mia")->check(CLI::IsMember({"dea", "mia"}));
    bd->add_option("--corpus", bd_corpus, "Record corpus (members for mia)")->required();
    bd->add_option("--nonmembers", bd_nonmembers, "Nonmember corpus (mia only)");
    bd->add_flag("--recollection", bd_recollection, "Enable the recollection mechanism");
    bd->add_flag("--no-recollection", bd_no_recollection, "Disable the recollection mechanism");
    bd->add_option("--out", bd_out, "Output JSONL path")->required();

    // ---- train ----------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "Train a model with sft/it/pcbl loss");
    std::string tr_loss = "sft", tr_data, tr_cloak_data, tr_init, tr_out, tr_preset;
    TrainConfig tr_cfg = train_preset("toy");
    uint64_t tr_init_seed = 0;
    uint32_t tr_context = 16, tr_embed = 32, tr_hidden = 128;
    tr->add_option("--loss", tr_loss, "sft | it | pcbl")->check(CLI::IsMember({"sft", "it", "pcbl"}));
    tr->add_option("--data", tr_data, "Corpus JSONL (sft) or phishing JSONL (it/pcbl)")->required();
    tr->add_option("--cloak-data", tr_cloak_data, "Cloak corpus JSONL (pcbl)");
    tr->add_option("--init", tr_init, "Initial checkpoint (omit to random-init)");
    tr->add_option("--out", tr_out, "Output checkpoint")->required();
    tr->add_option("--preset", tr_preset, "toy or paper hyperparameters");
    tr->add_option("--lr", tr_cfg.learning_rate, "Learning rate");
    tr->add_option("--epochs", tr_cfg.epochs, "Epochs");
    tr->add_option("--batch-size", tr_cfg.batch_size, "Batch size");
    tr->add_option("--weight-decay", tr_cfg.weight_decay, "AdamW weight decay");
    tr->add_option("--alpha", tr_cfg.alpha, "PCBL weight");
    tr->add_option("--seed", tr_cfg.seed, "Shuffle seed");
    tr->add_option("--init-seed", tr_init_seed, "Random init seed (when --init is omitted)");
    tr->add_option("--context", tr_context, "Context window (random init)");
    tr->add_option("--embed", tr_embed, "Embedding dim (random init)");
    tr->add_option("--hidden", tr_hidden, "Hidden dim (random init)");

    // ---- merge -----------------------------------------------------------------
    auto* mg = app.add_subcommand("merge", "Merge checkpoints");
    std::string mg_method = "linear", mg_base, mg_out, mg_coeff_mode = "mean";
    std::vector<std::string> mg_models;
    std::vector<double> mg_coeffs;
    double mg_density = 0.3, mg_drop = 0.7;
    uint64_t mg_seed = 0;
    mg->add_option("--method", mg_method, "linear | task-arithmetic | ties | dare");
    mg->add_option("--base", mg_base, "Pre-trained base checkpoint");
    mg->add_option("--model", mg_models, "Fine-tuned checkpoints")->required();
    mg->add_option("--coeff", mg_coeffs, "Merging coefficients (default: uniform 1/n)");
    mg->add_option("--density", mg_density, "TIES keep fraction");
    mg->add_option("--drop-prob", mg_drop, "DARE drop probability");
    mg->add_option("--seed", mg_seed, "DARE mask seed");
    mg->add_option("--ties-coeff-mode", mg_coeff_mode, "mean | per_task_prescale");
    mg->add_option("--out", mg_out, "Output checkpoint")->required();

    // ---- attack -----------------------------------------------------------------
    auto* at = app.add_subcommand("attack", "Run a privacy attack against a checkpoint");
    std::string at_method = "phishing-dea", at_model, at_corpus, at_nonmembers, at_reference,
                at_out, at_csv;
    bool at_recollection = false, at_no_recollection = false;
    uint32_t at_max_tokens = 220, at_neighbors = 4;
    uint64_t at_seed = 0;
    at->add_option("--method", at_method,
                   "prefix | prompt | phishing-dea | lira | neighborhood | phishing-mia")
        ->check(CLI::IsMember(
            {"prefix", "prompt", "phishing-dea", "lira", "neighborhood", "phishing-mia"}));
    at->add_option("--model", at_model, "Target checkpoint")->required();
    at->add_option("--corpus", at_corpus, "Records to attack (members for MIA)")->required();
    at->add_option("--nonmembers", at_nonmembers, "Nonmember records (MIA)");
    at->add_option("--reference", at_reference, "Reference checkpoint (lira)");
    at->add_flag("--recollection", at_recollection, "Use recollection phishing prompts");
    at->add_flag("--no-recollection", at_no_recollection, "Use plain phishing prompts");
    at->add_option("--max-tokens", at_max_tokens, "Generation budget per query");
    at->add_option("--n-neighbors", at_neighbors, "Neighborhood attack variants");
    at->add_option("--seed", at_seed, "Seed for neighbor perturbations");
    at->add_option("--out", at_out, "Report JSON path")->required();
    at->add_option("--csv", at_csv, "Optional CSV summary path");

    // ---- fingerprint ---------------------------------------------------------------
    auto* fp = app.add_subcommand("fingerprint", "Count the recollection marker in responses");
    std::string fp_responses, fp_marker = "<start-r>", fp_out;
    double fp_threshold = 0.5;
    fp->add_option("--responses", fp_responses, "JSONL of {\"response\": ...}")->required();
    fp->add_option("--marker", fp_marker, "Marker substring");
    fp->add_option("--threshold", fp_threshold, "Merged-verdict ratio threshold");
    fp->add_option("--out", fp_out, "Report JSON path (default stdout)");

    // ---- pipeline --------------------------------------------------------------------
    auto* pl = app.add_subcommand("pipeline", "Run the full attack pipeline experiment");
    PipelineConfig pl_cfg;
    std::string pl_config_file, pl_out_dir = "pipeline_out", pl_attack = "dea",
                pl_merge_method = "linear";
    bool pl_recollection = false, pl_no_recollection = false, pl_cloak = true, pl_no_cloak = false;
    pl->add_option("--config", pl_config_file, "Declarative config file (flags override)");
    pl->add_option("--attack", pl_attack, "dea or mia")->check(CLI::IsMember({"dea", "mia"}));
    pl->add_option("--seed", pl_cfg.seed, "Experiment seed");
    pl->add_option("--out-dir", pl_out_dir, "Output directory");
    pl->add_flag("--recollection", pl_recollection, "Force recollection prompts on");
    pl->add_flag("--no-recollection", pl_no_recollection, "Force recollection prompts off");
    pl->add_flag("--cloak,!--no-cloak", pl_cloak, "Cloak the phishing model (default on)");
    (void)pl_no_cloak;
    pl->add_option("--alpha", pl_cfg.alpha, "PCBL weight");
    pl->add_option("--merge-method", pl_merge_method, "linear | task-arithmetic | ties | dare");
    pl->add_option("--n-aux", pl_cfg.n_aux, "Attacker auxiliary corpus size");
    pl->add_option("--n-victim", pl_cfg.n_victim, "Victim private corpus size");
    pl->add_option("--n-nonmember-eval", pl_cfg.n_nonmember_eval, "Nonmember eval corpus size");
    pl->add_option("--jobs", pl_cfg.jobs, "Worker cap (results are independent of it)");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        CorpusOptions opt;
        opt.n_records = gen_n;
        opt.pii_profile = parse_profile(gen_profile);
        opt.seed = gen_seed;
        opt.entity_partition = gen_partition;
        auto records = generate_corpus(opt);
        if (gen_member)
            for (auto& r : records) r.is_member = true;
        if (gen_max_len > 0) records = truncate_by_length(records, gen_min_len, gen_max_len);
        write_records(records, gen_out);
        std::printf("wrote %zu records to %s\n", records.size(), gen_out.c_str());
        return 0;
    }

    if (bd->parsed()) {
        const bool recollection = bd_recollection && !bd_no_recollection;
        std::vector<PhishingExample> ds;
        if (bd_kind == "dea") {
            ds = build_dea_dataset(read_records(bd_corpus), recollection);
        } else {
            if (bd_nonmembers.empty())
                throw ValidationError("build-dataset --kind mia requires --nonmembers");
            ds = build_mia_dataset(read_records(bd_corpus), read_records(bd_nonmembers),
                                   recollection);
        }
        write_examples(ds, bd_out);
        std::printf("wrote %zu examples to %s\n", ds.size(), bd_out.c_str());
        return 0;
    }

    if (tr->parsed()) {
        if (!tr_preset.empty()) {
            TrainConfig preset = train_preset(tr_preset);
            preset.seed = tr_cfg.seed;
            preset.alpha = tr_cfg.alpha;
            tr_cfg = preset;
        }
        Checkpoint init;
        if (!tr_init.empty()) {
            init = load_checkpoint(tr_init);
        } else {
            ToyLmSpec spec;
            spec.context = tr_context;
            spec.embed_dim = tr_embed;
            spec.hidden_dim = tr_hidden;
            init = init_params(spec, tr_init_seed);
        }
        TrainData data;
        LossKind kind = LossKind::sft;
        if (tr_loss == "sft") {
            for (const auto& r : read_records(tr_data))
                data.sequences.push_back(make_sft_sequence(r.text));
        } else {
            kind = tr_loss == "it" ? LossKind::it : LossKind::pcbl;
            for (const auto& ex : read_examples(tr_data))
                data.pairs.push_back(make_chat_pair(ex.system, ex.user, ex.assistant));
            if (kind == LossKind::pcbl) {
                if (tr_cloak_data.empty())
                    throw ValidationError("train --loss pcbl requires --cloak-data");
                for (const auto& r : read_records(tr_cloak_data))
                    data.sequences.push_back(make_sft_sequence(r.text));
            }
        }
        TrainStats stats;
        const Checkpoint out = train(init, data, kind, tr_cfg, &stats);
        save_checkpoint(out, tr_out);
        std::printf("trained %s: loss %.4f -> %.4f over %zu epochs; saved %s\n", tr_loss.c_str(),
                    stats.epoch_mean_loss.front(), stats.epoch_mean_loss.back(),
                    stats.epoch_mean_loss.size(), tr_out.c_str());
        return 0;
    }

    if (mg->parsed()) {
        MergeConfig cfg;
        cfg.method = merge_method_from_string(mg_method);
        cfg.density = mg_density;
        cfg.drop_prob = mg_drop;
        cfg.seed = mg_seed;
        if (mg_coeff_mode == "mean") cfg.ties_coeff_mode = TiesCoeffMode::mean;
        else if (mg_coeff_mode == "per_task_prescale") cfg.ties_coeff_mode = TiesCoeffMode::per_task_prescale;
        else throw ValidationError("unknown --ties-coeff-mode: " + mg_coeff_mode);
        cfg.coefficients = mg_coeffs;
        if (cfg.coefficients.empty())
            cfg.coefficients.assign(mg_models.size(), 1.0 / static_cast<double>(mg_models.size()));

        std::vector<Checkpoint> models;
        for (const auto& p : mg_models) models.push_back(load_checkpoint(p));
        std::optional<Checkpoint> base;
        if (!mg_base.empty()) base = load_checkpoint(mg_base);
        if (cfg.method != MergeMethod::linear && !base)
            throw ValidationError("merge --method " + mg_method + " requires --base");
        const Checkpoint merged = merge(base ? &*base : nullptr, models, cfg);
        save_checkpoint(merged, mg_out);
        std::printf("merged %zu models (%s) -> %s\n", models.size(), mg_method.c_str(),
                    mg_out.c_str());
        return 0;
    }

    if (at->parsed()) {
        const bool recollection = at_recollection && !at_no_recollection;
        const auto records = read_records(at_corpus);
        const LmEngine engine(load_checkpoint(at_model));

        nlohmann::json report;
        report["method"] = at_method;
        report["n"] = 0;
        report["asr"] = nullptr;
        report["auc"] = nullptr;
        report["mismatches"] = 0;
        report["per_type_asr"] = nlohmann::json::object();
        nlohmann::json samples = nlohmann::json::array();
        std::optional<double> overall_asr, overall_auc;
        uint64_t mismatches = 0, n = 0;

        if (at_method == "prefix" || at_method == "prompt" || at_method == "phishing-dea") {
            std::vector<DeaPrediction> preds;
            for (const auto& rec : records) {
                if (at_method == "prefix") preds.push_back(prefix_attack(engine, rec, at_max_tokens));
                else if (at_method == "prompt") preds.push_back(prompt_attack(engine, rec, at_max_tokens));
                else preds.push_back(phishing_dea_attack(engine, rec, recollection, at_max_tokens));
            }
            const MatchRule rule = at_method == "phishing-dea" ? MatchRule::exact_extracted
                                                               : MatchRule::substring_raw;
            const AsrResult r = asr(preds, records, rule);
            overall_asr = r.overall;
            n = r.n;
            report["per_type_asr"] = r.per_type;
            for (const auto& p : preds) {
                samples.push_back({{"record_id", p.record_id},
                                   {"skipped", p.skipped},
                                   {"extracted", p.extracted},
                                   {"response", p.raw_response}});
            }
        } else {
            std::vector<PrivacyRecord> members = records;
            std::vector<PrivacyRecord> nonmembers;
            if (at_nonmembers.empty())
                throw ValidationError("MIA attacks require --nonmembers");
            nonmembers = read_records(at_nonmembers);
            std::optional<LmEngine> reference;
            if (at_method == "lira") {
                if (at_reference.empty()) throw ValidationError("lira requires --reference");
                reference.emplace(load_checkpoint(at_reference));
            }
            std::vector<MiaScoredSample> scoredv;
            auto side = [&](const std::vector<PrivacyRecord>& recs, bool truth) {
                for (const auto& rec : recs) {
                    MiaScoredSample s;
                    if (at_method == "lira") {
                        s = lira_score(engine.nll(rec.text).mean(), reference->nll(rec.text).mean());
                    } else if (at_method == "neighborhood") {
                        s = neighborhood_score(engine, rec.text, at_neighbors, at_seed);
                    } else {
                        s = phishing_mia_attack(engine, rec, recollection, at_max_tokens);
                    }
                    s.record_id = rec.id;
                    s.truth = truth;
                    scoredv.push_back(std::move(s));
                }
            };
            side(members, true);
            side(nonmembers, false);
            overall_auc = auc(scoredv);
            mismatches = count_mismatches(scoredv);
            n = scoredv.size();
            for (const auto& s : scoredv) {
                samples.push_back({{"record_id", s.record_id},
                                   {"score", s.score},
                                   {"truth", s.truth}});
            }
        }

        report["n"] = n;
        if (overall_asr) report["asr"] = *overall_asr;
        if (overall_auc) report["auc"] = *overall_auc;
        report["mismatches"] = mismatches;
        report["samples"] = samples;
        detail::write_text(at_out, report.dump(2) + "\n");
        if (!at_csv.empty()) {
            std::string csv = "method,model,dataset,n,asr,auc,mismatches\n";
            csv += at_method + "," + at_model + "," + at_corpus + "," + std::to_string(n) + "," +
                   detail::csv_field(overall_asr) + "," + detail::csv_field(overall_auc) + "," +
                   std::to_string(mismatches) + "\n";
            detail::write_text(at_csv, csv);
        }
        std::printf("%s: n=%llu asr=%s auc=%s mismatches=%llu -> %s\n", at_method.c_str(),
                    static_cast<unsigned long long>(n),
                    overall_asr ? std::to_string(*overall_asr).c_str() : "-",
                    overall_auc ? std::to_string(*overall_auc).c_str() : "-",
                    static_cast<unsigned long long>(mismatches), at_out.c_str());
        return 0;
    }

    if (fp->parsed()) {
        std::ifstream f(fp_responses);
        if (!f) throw ValidationError("cannot open: " + fp_responses);
        std::vector<std::string> responses;
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            responses.push_back(j.is_string() ? j.get<std::string>()
                                              : j.at("response").get<std::string>());
        }
        const FingerprintReport rep = fingerprint(responses, fp_marker, fp_threshold);
        nlohmann::json j = {{"n_queries", rep.n_queries},
                            {"marker_count", rep.marker_count},
                            {"marker", rep.marker},
                            {"ratio_threshold", rep.ratio_threshold},
                            {"verdict", rep.verdict}};
        if (fp_out.empty()) {
            std::printf("%s\n", j.dump(2).c_str());
        } else {
            detail::write_text(fp_out, j.dump(2) + "\n");
        }
        return 0;
    }

    if (pl->parsed()) {
        PipelineConfig cfg = pl_cfg;
        if (!pl_config_file.empty()) cfg = parse_pipeline_config(pl_config_file);
        // explicit flags override the config file
        if (pl->count("--attack") || pl_config_file.empty()) cfg.attack_kind = pl_attack;
        if (pl->count("--seed")) cfg.seed = pl_cfg.seed;
        if (pl->count("--alpha")) cfg.alpha = pl_cfg.alpha;
        if (pl->count("--n-aux")) cfg.n_aux = pl_cfg.n_aux;
        if (pl->count("--n-victim")) cfg.n_victim = pl_cfg.n_victim;
        if (pl->count("--n-nonmember-eval")) cfg.n_nonmember_eval = pl_cfg.n_nonmember_eval;
        if (pl->count("--jobs")) cfg.jobs = pl_cfg.jobs;
        if (pl->count("--merge-method"))
            cfg.merge.method = merge_method_from_string(pl_merge_method);
        if (pl_recollection) cfg.recollection = true;
        if (pl_no_recollection) cfg.recollection = false;
        if (pl->count("--cloak") || pl->count("--no-cloak")) cfg.cloak = pl_cloak;

        const PipelineResult r = run_pipeline(cfg, pl_out_dir);
        std::printf("pipeline %s seed=%llu recollection=%d cloak=%d\n", r.attack_kind.c_str(),
                    static_cast<unsigned long long>(r.seed), r.recollection ? 1 : 0,
                    r.cloak ? 1 : 0);
        std::printf("  phishing metric before=%.4f after=%.4f\n",
                    r.before_metric.value_or(-1.0), r.after_metric.value_or(-1.0));
        if (r.improvement_pct)
            std::printf("  improvement: %+.1f%%\n", *r.improvement_pct);
        std::printf("  mismatches before=%llu after=%llu\n",
                    static_cast<unsigned long long>(r.before_mismatches),
                    static_cast<unsigned long long>(r.after_mismatches));
        std::printf("  fingerprint ratio victim=%.3f merged=%.3f\n", r.fingerprint_ratio_victim,
                    r.fingerprint_ratio_merged);
        std::printf("  cloak heldout nll victim=%.4f merged=%.4f\n", r.cloak_heldout_nll_victim,
                    r.cloak_heldout_nll_merged);
        std::printf("  artifacts: %s\n", r.out_dir.string().c_str());
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const phimm::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const CLI::ParseError& e) {
        return e.get_exit_code() == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
