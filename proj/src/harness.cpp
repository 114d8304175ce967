// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <spdlog/spdlog.h>

#include "treebon/error.hpp"
#include "treebon/parallel.hpp"

namespace treebon {

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// JSON has no infinities; non-finite numbers are written as null.
nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

double num_from(const nlohmann::json& j) {
    return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string run_key(const RunRecord& r) { return r.prompt_id + "#" + std::to_string(r.seed); }

std::map<std::string, const RunRecord*> index_runs(const std::vector<RunRecord>& runs, const char* side) {
    std::map<std::string, const RunRecord*> out;
    for (const auto& r : runs) {
        if (!out.emplace(run_key(r), &r).second) {
            throw Error(std::string("duplicate run ") + run_key(r) + " in records " + side);
        }
    }
    return out;
}

void check_same_keys(const std::map<std::string, const RunRecord*>& a,
                     const std::map<std::string, const RunRecord*>& b) {
    std::vector<std::string> only_a, only_b;
    for (const auto& [k, _] : a) {
        if (!b.contains(k)) only_a.push_back(k);
    }
    for (const auto& [k, _] : b) {
        if (!a.contains(k)) only_b.push_back(k);
    }
    if (only_a.empty() && only_b.empty()) return;
    std::string msg = "record sets differ;";
    const auto list = [&](const char* label, const std::vector<std::string>& ids) {
        if (ids.empty()) return;
        msg += std::string(" only in ") + label + ":";
        for (const auto& id : ids) msg += " " + id;
        msg += ";";
    };
    list("a", only_a);
    list("b", only_b);
    throw Error(msg);
}

}  // namespace

std::vector<PromptRecord> parse_dataset(std::istream& in, const IngestOptions& options) {
    std::vector<PromptRecord> records;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        PromptRecord rec;
        if (options.format == DatasetFormat::lines) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            rec.id = std::to_string(records.size());
            rec.prompt = line;
        } else {
            nlohmann::json row;
            try {
                row = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
            }
            if (!row.is_object() || !row.contains(options.prompt_field) || !row[options.prompt_field].is_string()) {
                throw Error("line " + std::to_string(lineno) + ": missing string field '" + options.prompt_field + "'");
            }
            rec.prompt = row[options.prompt_field].get<std::string>();
            if (row.contains(options.id_field)) {
                const auto& id = row[options.id_field];
                rec.id = id.is_string() ? id.get<std::string>() : id.dump();
            } else {
                rec.id = std::to_string(records.size());
            }
            row.erase(options.prompt_field);
            row.erase(options.id_field);
            rec.meta = std::move(row);
        }
        if (!seen.insert(rec.id).second) {
            throw Error("line " + std::to_string(lineno) + ": duplicate id '" + rec.id + "'");
        }
        records.push_back(std::move(rec));
    }
    if (options.sample) return sample_records(records, *options.sample, options.sample_seed);
    return records;
}

std::vector<PromptRecord> ingest_dataset(const std::filesystem::path& path, const IngestOptions& options) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset " + path.string());
    return parse_dataset(in, options);
}

std::vector<PromptRecord> sample_records(const std::vector<PromptRecord>& records, std::size_t k,
                                         std::uint64_t seed) {
    if (k >= records.size()) return records;
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    StreamRng rng(splitmix64(seed));
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next() % (idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    std::vector<PromptRecord> out;
    out.reserve(k);
    for (std::size_t i : idx) out.push_back(records[i]);
    return out;
}

void to_json(nlohmann::json& j, const BackendSpec& b) {
    j = {{"kind", b.kind == BackendSpec::Kind::toy ? "toy" : "http"}};
    if (b.kind == BackendSpec::Kind::toy) {
        j["toy"] = b.toy;
    } else {
        j["policy_url"] = b.policy_url;
        j["scorer_url"] = b.scorer_url;
        j["reward_url"] = b.reward_url;
        j["prm"] = b.prm;
    }
}

void from_json(const nlohmann::json& j, BackendSpec& b) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "toy") {
        b.kind = BackendSpec::Kind::toy;
        b.toy = j.at("toy").get<ToyTaskSpec>();
    } else if (kind == "http") {
        b.kind = BackendSpec::Kind::http;
        b.policy_url = j.value("policy_url", "");
        b.scorer_url = j.value("scorer_url", "");
        b.reward_url = j.value("reward_url", "");
        b.prm = j.value("prm", false);
    } else {
        throw ConfigError("unknown backend kind '" + kind + "'");
    }
}

BackendBundle::BackendBundle(const BackendSpec& spec, std::string auth_token) : spec_(spec) {
    if (spec.kind == BackendSpec::Kind::toy) {
        auto toy = std::make_shared<ToyBackend>(make_tilted_task(spec.toy));
        generator_ = toy;
        scorer_model_ = toy;
        external_ = std::make_unique<TargetCountScorer>(spec.toy.target);
        return;
    }
    const auto remote = [&](const std::string& url) {
        RemoteConfig cfg;
        cfg.base_url = url;
        cfg.auth_token = auth_token;
        return cfg;
    };
    generator_ = std::make_shared<RemotePolicyBackend>(remote(spec.policy_url));
    scorer_model_ = spec.scorer_url.empty() ? generator_ : std::make_shared<RemotePolicyBackend>(remote(spec.scorer_url));
    if (!spec.reward_url.empty()) {
        reward_model_ = std::make_unique<HttpRewardModel>(remote(spec.reward_url));
        external_ = std::make_unique<RewardModelScorer>(*reward_model_, *generator_, spec.prm);
    }
}

SearchBackends BackendBundle::backends(std::size_t workers) const {
    return SearchBackends{*generator_, *scorer_model_, external_.get(), workers};
}

std::optional<double> BackendBundle::true_reward(const TokenSeq& seq) const {
    if (spec_.kind != BackendSpec::Kind::toy) return std::nullopt;
    return TargetCountScorer(spec_.toy.target).score(seq);
}

void to_json(nlohmann::json& j, const RunRecord& r) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : r.layers) {
        layers.push_back({{"layer", l.layer},
                          {"candidates", l.candidates},
                          {"min", num(l.min)},
                          {"median", num(l.median)},
                          {"max", num(l.max)},
                          {"survivors", l.survivors}});
    }
    j = {{"schema_version", kSchemaVersion},
         {"prompt_id", r.prompt_id},
         {"prompt", r.prompt},
         {"method", to_string(r.config.method)},
         {"config", r.config},
         {"backend", r.backend},
         {"seed", r.seed},
         {"prompt_tokens", r.prompt_tokens},
         {"response_tokens", r.response_tokens},
         {"response_text", r.response_text},
         {"final_score", r.final_score ? num(*r.final_score) : nlohmann::json(nullptr)},
         {"terminated", r.terminated},
         {"layers", layers},
         {"ledger", r.ledger},
         {"wall_time", r.wall_time}};
    if (r.true_reward) j["true_reward"] = *r.true_reward;
    if (r.correct) j["correct"] = *r.correct;
    if (r.error) j["error"] = *r.error;
}

void from_json(const nlohmann::json& j, RunRecord& r) {
    const int version = j.value("schema_version", 0);
    if (version != kSchemaVersion) throw Error("unsupported run record schema_version " + std::to_string(version));
    r.prompt_id = j.at("prompt_id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.config = j.at("config").get<SearchConfig>();
    r.backend = j.at("backend").get<BackendSpec>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.prompt_tokens = j.at("prompt_tokens").get<std::vector<TokenId>>();
    r.response_tokens = j.at("response_tokens").get<std::vector<TokenId>>();
    r.response_text = j.at("response_text").get<std::string>();
    r.final_score.reset();
    if (!j.at("final_score").is_null()) r.final_score = j["final_score"].get<double>();
    r.terminated = j.at("terminated").get<bool>();
    r.layers.clear();
    for (const auto& l : j.at("layers")) {
        LayerSummary s;
        s.layer = l.at("layer").get<int>();
        s.candidates = l.at("candidates").get<std::size_t>();
        s.min = num_from(l.at("min"));
        s.median = num_from(l.at("median"));
        s.max = num_from(l.at("max"));
        s.survivors = l.at("survivors").get<std::vector<std::uint32_t>>();
        r.layers.push_back(std::move(s));
    }
    r.ledger = j.at("ledger").get<FlopsLedger>();
    r.wall_time = j.value("wall_time", 0.0);
    r.true_reward = j.contains("true_reward") ? std::optional(j["true_reward"].get<double>()) : std::nullopt;
    r.correct = j.contains("correct") ? std::optional(j["correct"].get<bool>()) : std::nullopt;
    r.error = j.contains("error") ? std::optional(j["error"].get<std::string>()) : std::nullopt;
}

std::vector<RunRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open records " + path.string());
    std::vector<RunRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<RunRecord>());
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::uint64_t derive_run_seed(std::uint64_t seed, const std::string& prompt_id) noexcept {
    return splitmix64(seed ^ fnv1a(prompt_id));
}

std::optional<std::string> extract_answer(std::string_view text) {
    const auto pos = text.rfind("answer is");
    if (pos == std::string_view::npos) return std::nullopt;
    const std::string tail(text.substr(pos + 9));
    static const std::regex number(R"(-?[0-9][0-9,]*(\.[0-9]+)?)");
    std::smatch m;
    if (!std::regex_search(tail, m, number)) return std::nullopt;
    std::string out = m.str();
    std::erase(out, ',');
    return out;
}

bool answer_matches(std::string_view response, const nlohmann::json& gold) {
    const auto got = extract_answer(response);
    if (!got) return false;
    std::string want = gold.is_string() ? gold.get<std::string>() : gold.dump();
    std::erase(want, ',');
    try {
        return std::abs(std::stod(*got) - std::stod(want)) < 1e-9;
    } catch (const std::exception&) {
        return trim(*got) == trim(want);
    }
}

RunRecord run_one(const PromptRecord& prompt, const SearchConfig& config, std::uint64_t seed,
                  const BackendBundle& bundle, std::size_t search_workers, SearchResult* result_out) {
    RunRecord rec;
    rec.prompt_id = prompt.id;
    rec.prompt = prompt.prompt;
    rec.config = config;
    rec.config.seed = derive_run_seed(seed, prompt.id);
    rec.backend = bundle.spec();
    rec.seed = seed;
    try {
        rec.prompt_tokens = bundle.generator().tokenize(prompt.prompt);
        auto result = run_search(rec.config, rec.prompt_tokens, bundle.backends(search_workers));
        const auto resp = result.best.response();
        rec.response_tokens.assign(resp.begin(), resp.end());
        rec.response_text = bundle.generator().detokenize(resp);
        rec.final_score = result.best_score;
        rec.terminated = result.best.terminated();
        for (const auto& layer : result.per_layer) {
            LayerSummary s;
            s.layer = layer.layer;
            s.candidates = layer.candidates.size();
            std::vector<double> scores;
            for (NodeId id : layer.candidates) {
                scores.push_back(result.tree.at(id).score.value_or(-std::numeric_limits<double>::infinity()));
            }
            std::sort(scores.begin(), scores.end());
            s.min = scores.front();
            s.max = scores.back();
            const std::size_t n = scores.size();
            s.median = n % 2 ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
            for (NodeId id : layer.selected) s.survivors.push_back(to_index(id));
            rec.layers.push_back(std::move(s));
        }
        rec.ledger = result.ledger;
        rec.true_reward = bundle.true_reward(result.best);
        if (prompt.meta.contains("gold")) rec.correct = answer_matches(rec.response_text, prompt.meta["gold"]);
        rec.wall_time = result.wall_time;
        if (result_out) *result_out = std::move(result);
    } catch (const std::exception& e) {
        spdlog::error("run {} seed {} failed: {}", prompt.id, seed, e.what());
        rec.error = e.what();
    }
    return rec;
}

SearchResult replay(const RunRecord& record, const BackendBundle& bundle, std::size_t workers) {
    return run_search(record.config, record.prompt_tokens, bundle.backends(workers));
}

void to_json(nlohmann::json& j, const BatchSummary& s) {
    j = {{"schema_version", kSchemaVersion},
         {"runs", s.runs},
         {"failures", s.failures},
         {"mean_score", num(s.mean_score)},
         {"stddev_score", num(s.stddev_score)},
         {"generated_tokens", s.generated_tokens},
         {"nominal_flops", s.nominal_flops},
         {"prompt_tokens_note", "reference FLOPs table reproduced with a reverse-engineered prompt length of " +
                                    std::to_string(kReferencePromptTokens) + " tokens"}};
    if (s.mean_true_reward) j["mean_true_reward"] = *s.mean_true_reward;
}

BatchSummary summarize(const std::vector<RunRecord>& records) {
    BatchSummary s;
    s.runs = records.size();
    std::vector<double> scores;
    double true_sum = 0.0;
    std::size_t true_n = 0;
    for (const auto& r : records) {
        if (r.error) {
            ++s.failures;
            continue;
        }
        if (r.final_score && std::isfinite(*r.final_score)) scores.push_back(*r.final_score);
        if (r.true_reward) {
            true_sum += *r.true_reward;
            ++true_n;
        }
        s.generated_tokens += r.ledger.generated_total();
        s.nominal_flops += r.ledger.nominal_flops;
    }
    if (!scores.empty()) {
        double sum = 0.0;
        for (double x : scores) sum += x;
        s.mean_score = sum / static_cast<double>(scores.size());
        if (scores.size() > 1) {
            double ss = 0.0;
            for (double x : scores) ss += (x - s.mean_score) * (x - s.mean_score);
            s.stddev_score = std::sqrt(ss / static_cast<double>(scores.size() - 1));
        }
    }
    if (true_n) s.mean_true_reward = true_sum / static_cast<double>(true_n);
    return s;
}

BatchResult run_batch(const std::vector<PromptRecord>& dataset, const SearchConfig& config,
                      const BackendBundle& bundle, const BatchOptions& options, std::ostream* out) {
    config.validate();
    if (options.seeds.empty()) throw ConfigError("run_batch needs at least one seed");
    const std::size_t nseeds = options.seeds.size();
    BatchResult result;
    result.records.resize(dataset.size() * nseeds);
    parallel_for(result.records.size(), options.workers, [&](std::size_t job) {
        const auto& prompt = dataset[job / nseeds];
        result.records[job] = run_one(prompt, config, options.seeds[job % nseeds], bundle, options.search_workers);
    });
    // Single writer, deterministic order.
    if (out) {
        for (const auto& r : result.records) *out << nlohmann::json(r).dump() << '\n';
        out->flush();
    }
    result.summary = summarize(result.records);
    return result;
}

PairedSummary compare_runs(const std::vector<RunRecord>& a, const std::vector<RunRecord>& b) {
    const auto ia = index_runs(a, "a");
    const auto ib = index_runs(b, "b");
    check_same_keys(ia, ib);
    const auto value = [](const RunRecord& r) {
        if (r.true_reward) return *r.true_reward;
        return r.final_score.value_or(-std::numeric_limits<double>::infinity());
    };
    PairedSummary s;
    std::vector<double> diffs;
    for (const auto& [key, ra] : ia) {
        const RunRecord* rb = ib.at(key);
        PairedRow row{key, value(*ra), value(*rb), "tie"};
        if (row.a > row.b) {
            row.winner = "a";
            ++s.wins_a;
        } else if (row.b > row.a) {
            row.winner = "b";
            ++s.wins_b;
        } else {
            ++s.ties;
        }
        if (std::isfinite(row.a) && std::isfinite(row.b)) diffs.push_back(row.a - row.b);
        s.rows.push_back(std::move(row));
    }
    const std::size_t n = diffs.size();
    if (n == 0) return s;
    double sum = 0.0;
    for (double d : diffs) sum += d;
    s.mean_diff = sum / static_cast<double>(n);
    if (n < 2) return s;
    double ss = 0.0;
    for (double d : diffs) ss += (d - s.mean_diff) * (d - s.mean_diff);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) {
        s.t_statistic = s.mean_diff > 0 ? std::numeric_limits<double>::infinity() : 0.0;
        s.p_one_sided = s.mean_diff > 0 ? 0.0 : 1.0;
        return s;
    }
    s.t_statistic = s.mean_diff / (sd / std::sqrt(static_cast<double>(n)));
    const boost::math::students_t dist(static_cast<double>(n - 1));
    s.p_one_sided = boost::math::cdf(boost::math::complement(dist, s.t_statistic));
    return s;
}

std::size_t export_pairs(const std::vector<RunRecord>& a, const std::vector<RunRecord>& b, std::ostream& out,
                         std::uint64_t seed) {
    const auto ia = index_runs(a, "a");
    const auto ib = index_runs(b, "b");
    check_same_keys(ia, ib);
    std::size_t count = 0;
    for (const auto& [key, ra] : ia) {
        const RunRecord* rb = ib.at(key);
        StreamRng rng(stream_seed(seed, fnv1a(key)));
        const bool swap = rng.next() & 1;
        const RunRecord& first = swap ? *rb : *ra;
        const RunRecord& second = swap ? *ra : *rb;
        nlohmann::json row = {{"schema_version", kSchemaVersion},
                              {"id", ra->prompt_id},
                              {"seed", ra->seed},
                              {"prompt", ra->prompt},
                              {"response_a", first.response_text},
                              {"response_b", second.response_text},
                              {"method_a", to_string(first.config.method)},
                              {"method_b", to_string(second.config.method)},
                              {"swapped", swap}};
        out << row.dump() << '\n';
        ++count;
    }
    return count;
}

SweepAxis parse_sweep_axis(std::string_view name) {
    if (name == "layers") return SweepAxis::layers;
    if (name == "children") return SweepAxis::children;
    if (name == "roots") return SweepAxis::roots;
    throw ConfigError("unknown sweep axis '" + std::string(name) + "'");
}

std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<int>& values, const SearchConfig& base,
                            const std::vector<PromptRecord>& dataset, const BackendBundle& bundle,
                            const BatchOptions& options) {
    std::vector<SweepRow> rows;
    for (int v : values) {
        SweepRow row;
        row.value = v;
        SearchConfig cfg = base;
        switch (axis) {
            case SweepAxis::layers: cfg.N_layer = v; break;
            case SweepAxis::children: cfg.N_children = v; break;
            case SweepAxis::roots: cfg.N = v; break;
        }
        try {
            cfg.validate();
        } catch (const ConfigError& e) {
            row.skipped = true;
            row.reason = e.what();
            rows.push_back(std::move(row));
            continue;
        }
        const auto batch = run_batch(dataset, cfg, bundle, options, nullptr);
        const auto& s = batch.summary;
        const double runs = static_cast<double>(std::max<std::size_t>(1, s.runs - s.failures));
        row.mean_score = s.mean_score;
        row.tokens = static_cast<double>(s.generated_tokens) / runs;
        row.nominal_flops = s.nominal_flops / runs;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
    const char* name = axis == SweepAxis::layers ? "layers" : axis == SweepAxis::children ? "children" : "roots";
    std::ostringstream os;
    os.precision(10);
    os << "schema_version,axis,value,status,mean_score,tokens,nominal_flops\n";
    for (const auto& r : rows) {
        os << kSchemaVersion << ',' << name << ',' << r.value << ',';
        if (r.skipped) {
            os << "\"skipped: " << r.reason << "\",,,\n";
        } else {
            os << "ok," << r.mean_score << ',' << r.tokens << ',' << r.nominal_flops << '\n';
        }
    }
    return os.str();
}

}  // namespace treebon
