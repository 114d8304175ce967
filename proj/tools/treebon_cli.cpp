// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "treebon/analysis.hpp"
#include "treebon/error.hpp"
#include "treebon/harness.hpp"

using namespace treebon;

namespace {

constexpr int kExitFailures = 2;

std::string env_or(const char* name, std::string fallback = {}) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

struct SearchFlags {
    std::string method = "treebon";
    std::string variant = "weighted";
    std::string final_scorer = "same_as_partial";
    SearchConfig config;

    void add(CLI::App& app) {
        app.add_option("--method", method, "bon | treebon | sbon | beam")->capture_default_str();
        app.add_option("--N", config.N, "candidates per layer (roots)")->capture_default_str();
        app.add_option("--l_max", config.l_max, "maximum response tokens")->capture_default_str();
        app.add_option("--N_children", config.N_children, "children per survivor")->capture_default_str();
        app.add_option("--N_layer", config.N_layer, "tree layers")->capture_default_str();
        app.add_option("--variant", variant, "partial reward variant")->capture_default_str();
        app.add_option("--beta", config.variant.beta)->capture_default_str();
        app.add_option("--lambda", config.variant.lambda, "decay for weighted_exp_decay")->capture_default_str();
        app.add_option("--final_scorer", final_scorer, "same_as_partial | external")->capture_default_str();
        app.add_option("--alpha", config.alpha, "sbon rejection rate")->capture_default_str();
        app.add_option("--beam_width", config.beam_width)->capture_default_str();
        app.add_option("--temperature", config.sampling.temperature)->capture_default_str();
        app.add_option("--top_p", config.sampling.top_p)->capture_default_str();
        app.add_flag("--exclude_terminated", config.exclude_terminated, "rank finished candidates last");
        app.add_option("--flops_per_token", config.cost.flops_per_token)->capture_default_str();
        app.add_option("--scorer_passes", config.cost.scorer_passes)->capture_default_str();
    }

    SearchConfig resolve() const {
        SearchConfig c = config;
        c.method = parse_method(method);
        c.variant.kind = parse_reward_kind(variant);
        c.final_scorer = parse_final_scorer(final_scorer);
        return c;
    }
};

struct BackendFlags {
    std::string kind = "toy";
    BackendSpec spec;

    void add(CLI::App& app) {
        app.add_option("--backend", kind, "toy | http")->capture_default_str();
        app.add_option("--policy_url", spec.policy_url, "policy server (default $TREEBON_POLICY_URL)");
        app.add_option("--scorer_url", spec.scorer_url, "scoring model server (default $TREEBON_SCORER_URL)");
        app.add_option("--reward_url", spec.reward_url, "reward model server (default $TREEBON_REWARD_URL)");
        app.add_flag("--prm", spec.prm, "reward server returns per-step scores");
        app.add_option("--vocab_size", spec.toy.vocab_size)->capture_default_str();
        app.add_option("--order", spec.toy.order, "toy table context length (0 or 1)")->capture_default_str();
        app.add_option("--target", spec.toy.target, "toy target token")->capture_default_str();
        app.add_option("--tilt", spec.toy.tilt, "toy aligned-table tilt")->capture_default_str();
        app.add_option("--eos_prob", spec.toy.eos_prob)->capture_default_str();
        app.add_option("--toy_seed", spec.toy.seed)->capture_default_str();
    }

    BackendSpec resolve() const {
        BackendSpec s = spec;
        if (kind == "toy") {
            s.kind = BackendSpec::Kind::toy;
        } else if (kind == "http") {
            s.kind = BackendSpec::Kind::http;
            if (s.policy_url.empty()) s.policy_url = env_or(kPolicyUrlEnv);
            if (s.scorer_url.empty()) s.scorer_url = env_or("TREEBON_SCORER_URL");
            if (s.reward_url.empty()) s.reward_url = env_or(kRewardUrlEnv);
            if (s.policy_url.empty()) throw ConfigError("--policy_url or TREEBON_POLICY_URL is required");
        } else {
            throw ConfigError("unknown backend '" + kind + "'");
        }
        return s;
    }
};

struct DatasetFlags {
    std::string path;
    std::string format = "jsonl";
    IngestOptions options;
    std::size_t sample = 0;
    std::size_t synthetic = 0;

    void add(CLI::App& app) {
        app.add_option("--dataset", path, "JSONL or plain-text prompt file");
        app.add_option("--format", format, "jsonl | lines")->capture_default_str();
        app.add_option("--prompt_field", options.prompt_field)->capture_default_str();
        app.add_option("--id_field", options.id_field)->capture_default_str();
        app.add_option("--sample", sample, "draw k prompts");
        app.add_option("--sample_seed", options.sample_seed, "seed for --sample")->capture_default_str();
        app.add_option("--synthetic_prompts", synthetic, "generate k toy prompts instead of reading a file");
    }

    std::vector<PromptRecord> load() const {
        IngestOptions opt = options;
        if (sample) opt.sample = sample;
        if (synthetic) {
            if (!path.empty()) throw ConfigError("--dataset and --synthetic_prompts are exclusive");
            std::vector<PromptRecord> out;
            for (std::size_t i = 0; i < synthetic; ++i) out.push_back({std::to_string(i), "prompt " + std::to_string(i)});
            return opt.sample ? sample_records(out, *opt.sample, opt.sample_seed) : out;
        }
        if (path.empty()) throw ConfigError("--dataset or --synthetic_prompts is required");
        if (format == "jsonl") {
            opt.format = DatasetFormat::jsonl;
        } else if (format == "lines") {
            opt.format = DatasetFormat::lines;
        } else {
            throw ConfigError("unknown dataset format '" + format + "'");
        }
        return ingest_dataset(path, opt);
    }
};

struct BatchFlags {
    std::vector<std::uint64_t> seeds{0};
    BatchOptions options;

    void add(CLI::App& app) {
        app.add_option("--seeds", seeds, "comma-separated run seeds")->delimiter(',')->capture_default_str();
        app.add_option("--workers", options.workers, "prompts in flight")->capture_default_str();
        app.add_option("--search_workers", options.search_workers, "threads per search layer")->capture_default_str();
    }

    BatchOptions resolve() const {
        BatchOptions o = options;
        o.seeds = seeds;
        return o;
    }
};

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    auto out = open_out(path);
    out << text;
}

RunRecord pick_record(const std::vector<RunRecord>& records, const std::string& id, std::optional<std::uint64_t> seed,
                      std::size_t index) {
    if (id.empty()) {
        if (index >= records.size()) throw Error("record index out of range");
        return records[index];
    }
    for (const auto& r : records) {
        if (r.prompt_id == id && (!seed || r.seed == *seed)) return r;
    }
    throw Error("no record with id '" + id + "'");
}

std::string preview_tokens(const PolicyBackend& backend, std::span<const TokenId> seg) {
    std::string text = backend.detokenize(seg);
    if (text.size() > 40) text = text.substr(0, 37) + "...";
    return text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree-structured best-of-N decoding search"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log_level", log_level, "trace | debug | info | warn | error")->capture_default_str();

    // run
    auto* run = app.add_subcommand("run", "search every prompt and append run records");
    SearchFlags run_search_flags;
    BackendFlags run_backend;
    DatasetFlags run_data;
    BatchFlags run_batch_flags;
    std::string run_out;
    std::string run_summary;
    run_search_flags.add(*run);
    run_backend.add(*run);
    run_data.add(*run);
    run_batch_flags.add(*run);
    run->add_option("--out", run_out, "run records (JSONL)")->required();
    run->add_option("--summary", run_summary, "summary JSON (default stdout)");

    // sweep
    auto* sw = app.add_subcommand("sweep", "ablation sweep over one axis");
    SearchFlags sw_search;
    BackendFlags sw_backend;
    DatasetFlags sw_data;
    BatchFlags sw_batch;
    std::string sw_axis;
    std::vector<int> sw_values;
    std::string sw_out;
    sw_search.add(*sw);
    sw_backend.add(*sw);
    sw_data.add(*sw);
    sw_batch.add(*sw);
    sw->add_option("--axis", sw_axis, "layers | children | roots")->required();
    sw->add_option("--values", sw_values, "comma-separated axis values")->delimiter(',')->required();
    sw->add_option("--out", sw_out, "CSV table (default stdout)");

    // export-pairs
    auto* ep = app.add_subcommand("export-pairs", "blinded response pairs for an external judge");
    std::string ep_a, ep_b, ep_out;
    std::uint64_t ep_seed = 0;
    ep->add_option("--a", ep_a, "records of method a")->required();
    ep->add_option("--b", ep_b, "records of method b")->required();
    ep->add_option("--out", ep_out, "pairs (JSONL)")->required();
    ep->add_option("--seed", ep_seed, "position randomization seed")->capture_default_str();

    // compare
    auto* cmp = app.add_subcommand("compare", "paired comparison of two record files");
    std::string cmp_a, cmp_b, cmp_out;
    cmp->add_option("--a", cmp_a)->required();
    cmp->add_option("--b", cmp_b)->required();
    cmp->add_option("--out", cmp_out, "per-run winners (JSONL)");

    // export-tree
    auto* et = app.add_subcommand("export-tree", "replay a record and render its search tree");
    std::string et_records, et_id, et_format = "dot", et_out;
    std::optional<std::uint64_t> et_seed;
    std::size_t et_index = 0;
    et->add_option("--records", et_records, "run records (JSONL)")->required();
    et->add_option("--id", et_id, "prompt id (default: first record)");
    et->add_option("--seed", et_seed, "run seed when a prompt has several records");
    et->add_option("--index", et_index, "record index when --id is not given")->capture_default_str();
    et->add_option("--tree_format", et_format, "dot | json")->capture_default_str();
    et->add_option("--out", et_out, "output file (default stdout)");

    // analyze
    auto* an = app.add_subcommand("analyze", "prefix reward trajectories and prefix/full correlation");
    std::string an_records, an_jsonl, an_csv, an_variant = "weighted", an_scorer = "implicit";
    double an_beta = 1.0, an_lambda = 0.95, an_fraction = 1.0 / 3.0, an_threshold = 3.0;
    std::size_t an_workers = 1;
    an->add_option("--records", an_records, "run records (JSONL)")->required();
    an->add_option("--scorer", an_scorer, "implicit | external")->capture_default_str();
    an->add_option("--variant", an_variant)->capture_default_str();
    an->add_option("--beta", an_beta)->capture_default_str();
    an->add_option("--lambda", an_lambda)->capture_default_str();
    an->add_option("--fraction", an_fraction, "fixed prefix fraction")->capture_default_str();
    an->add_option("--threshold", an_threshold, "entropy threshold (nats)")->capture_default_str();
    an->add_option("--workers", an_workers)->capture_default_str();
    an->add_option("--trajectories", an_jsonl, "trajectories (JSONL)")->required();
    an->add_option("--csv", an_csv, "correlation summary CSV (default stdout)");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_mt("treebon"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    const std::string token = env_or(kAuthTokenEnv);
    try {
        if (*run) {
            const auto config = run_search_flags.resolve();
            config.validate();
            const auto dataset = run_data.load();
            const BackendBundle bundle(run_backend.resolve(), token);
            auto out = open_out(run_out);
            const auto result = run_batch(dataset, config, bundle, run_batch_flags.resolve(), &out);
            nlohmann::json summary = result.summary;
            summary["method"] = to_string(config.method);
            write_text(run_summary, summary.dump(2) + "\n");
            if (result.summary.too_many_failures()) {
                spdlog::error("{} of {} runs failed", result.summary.failures, result.summary.runs);
                return kExitFailures;
            }
        } else if (*sw) {
            const auto axis = parse_sweep_axis(sw_axis);
            const auto dataset = sw_data.load();
            const BackendBundle bundle(sw_backend.resolve(), token);
            const auto rows = sweep(axis, sw_values, sw_search.resolve(), dataset, bundle, sw_batch.resolve());
            write_text(sw_out, sweep_csv(axis, rows));
        } else if (*ep) {
            auto out = open_out(ep_out);
            const auto n = export_pairs(read_records(ep_a), read_records(ep_b), out, ep_seed);
            std::cout << n << " pairs\n";
        } else if (*cmp) {
            const auto s = compare_runs(read_records(cmp_a), read_records(cmp_b));
            if (!cmp_out.empty()) {
                auto out = open_out(cmp_out);
                for (const auto& r : s.rows) {
                    out << nlohmann::json{{"schema_version", kSchemaVersion}, {"key", r.key}, {"a", r.a}, {"b", r.b},
                                          {"winner", r.winner}}
                               .dump()
                        << '\n';
                }
            }
            const nlohmann::json j = {{"schema_version", kSchemaVersion}, {"pairs", s.rows.size()},
                                      {"mean_diff", s.mean_diff},         {"t_statistic", s.t_statistic},
                                      {"p_one_sided", s.p_one_sided},     {"wins_a", s.wins_a},
                                      {"wins_b", s.wins_b},               {"ties", s.ties}};
            std::cout << j.dump(2) << '\n';
        } else if (*et) {
            const auto record = pick_record(read_records(et_records), et_id, et_seed, et_index);
            if (record.error) throw Error("record failed originally: " + *record.error);
            const BackendBundle bundle(record.backend, token);
            const auto result = replay(record, bundle);
            const auto resp = result.best.response();
            if (!std::equal(resp.begin(), resp.end(), record.response_tokens.begin(), record.response_tokens.end())) {
                spdlog::warn("replay of {} chose a different response than recorded", record.prompt_id);
            }
            const auto format = et_format == "json" ? TreeFormat::json : TreeFormat::dot;
            if (et_format != "json" && et_format != "dot") throw ConfigError("unknown tree format '" + et_format + "'");
            const auto& gen = bundle.generator();
            write_text(et_out, export_tree(result.tree, result.per_layer, format,
                                           [&](std::span<const TokenId> seg) { return preview_tokens(gen, seg); }));
        } else if (*an) {
            const auto records = read_records(an_records);
            if (records.empty()) throw Error("no records in " + an_records);
            const BackendBundle bundle(records.front().backend, token);
            std::vector<TrajectoryInput> inputs;
            for (const auto& r : records) {
                if (r.error) continue;
                std::vector<TokenId> tokens = r.prompt_tokens;
                tokens.insert(tokens.end(), r.response_tokens.begin(), r.response_tokens.end());
                inputs.push_back({r.prompt_id, TokenSeq(std::move(tokens), r.prompt_tokens.size(), r.terminated)});
            }
            std::unique_ptr<CandidateScorer> owned;
            const CandidateScorer* scorer = nullptr;
            if (an_scorer == "implicit") {
                PartialRewardVariant v;
                v.kind = parse_reward_kind(an_variant);
                v.beta = an_beta;
                v.lambda = an_lambda;
                v.validate();
                owned = std::make_unique<ImplicitRewardScorer>(bundle.scorer_model(), v);
                scorer = owned.get();
            } else if (an_scorer == "external") {
                scorer = bundle.external();
                if (!scorer) throw ConfigError("backend has no external scorer");
            } else {
                throw ConfigError("unknown scorer '" + an_scorer + "'");
            }
            const auto report =
                trajectory_report(inputs, *scorer, bundle.generator(), an_fraction, an_threshold, an_workers);
            auto out = open_out(an_jsonl);
            for (const auto& t : report.trajectories) out << nlohmann::json(t).dump() << '\n';
            write_text(an_csv, correlation_csv(report.summary));
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
