// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "treebon/budget.hpp"
#include "treebon/http_backend.hpp"
#include "treebon/search.hpp"
#include "treebon/toy_model.hpp"

namespace treebon {

inline constexpr int kSchemaVersion = 1;

struct PromptRecord {
    std::string id;
    std::string prompt;
    nlohmann::json meta = nlohmann::json::object();
};

enum class DatasetFormat { jsonl, lines };

struct IngestOptions {
    DatasetFormat format = DatasetFormat::jsonl;
    std::string prompt_field = "prompt";
    std::string id_field = "id";
    // Draw this many records (file order kept) using sample_seed.
    std::optional<std::size_t> sample;
    std::uint64_t sample_seed = 0;
};

/// JSONL rows need the prompt field; a missing id becomes the row index.
/// Plain-text files give one prompt per non-blank line with ids "0", "1", ...
std::vector<PromptRecord> ingest_dataset(const std::filesystem::path& path, const IngestOptions& options);
std::vector<PromptRecord> parse_dataset(std::istream& in, const IngestOptions& options);

/// `k` records drawn without replacement, reproducible for a given seed, in input order.
std::vector<PromptRecord> sample_records(const std::vector<PromptRecord>& records, std::size_t k, std::uint64_t seed);

/// Where generation and scoring happen. Serialized into every run record.
struct BackendSpec {
    enum class Kind { toy, http } kind = Kind::toy;
    ToyTaskSpec toy;
    std::string policy_url;
    // Scoring model server; empty means the policy server.
    std::string scorer_url;
    std::string reward_url;
    bool prm = false;
};

void to_json(nlohmann::json& j, const BackendSpec& b);
void from_json(const nlohmann::json& j, BackendSpec& b);

/// Live backends built from a BackendSpec.
class BackendBundle {
public:
    explicit BackendBundle(const BackendSpec& spec, std::string auth_token = {});

    SearchBackends backends(std::size_t workers) const;
    const PolicyBackend& generator() const { return *generator_; }
    const PolicyBackend& scorer_model() const { return *scorer_model_; }
    const CandidateScorer* external() const { return external_.get(); }
    const BackendSpec& spec() const { return spec_; }
    /// Synthetic true reward (toy task only).
    std::optional<double> true_reward(const TokenSeq& seq) const;

private:
    BackendSpec spec_;
    std::shared_ptr<PolicyBackend> generator_;
    std::shared_ptr<PolicyBackend> scorer_model_;
    std::unique_ptr<RewardModel> reward_model_;
    std::unique_ptr<CandidateScorer> external_;
};

struct LayerSummary {
    int layer = 0;
    std::size_t candidates = 0;
    double min = 0.0;
    double median = 0.0;
    double max = 0.0;
    std::vector<std::uint32_t> survivors;
};

struct RunRecord {
    std::string prompt_id;
    std::string prompt;
    SearchConfig config;  // config.seed is the derived per-run seed
    BackendSpec backend;
    std::uint64_t seed = 0;  // user-level seed
    std::vector<TokenId> prompt_tokens;
    std::vector<TokenId> response_tokens;
    std::string response_text;
    std::optional<double> final_score;
    bool terminated = false;
    std::vector<LayerSummary> layers;
    FlopsLedger ledger;
    std::optional<double> true_reward;
    std::optional<bool> correct;
    std::optional<std::string> error;
    double wall_time = 0.0;
};

void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

std::vector<RunRecord> read_records(const std::filesystem::path& path);

/// Per-run seed from the user seed and the prompt id.
std::uint64_t derive_run_seed(std::uint64_t seed, const std::string& prompt_id) noexcept;

/// Text after the last "answer is", leading number only (commas dropped).
std::optional<std::string> extract_answer(std::string_view text);
bool answer_matches(std::string_view response, const nlohmann::json& gold);

/// One search on one prompt, packaged as a record.
RunRecord run_one(const PromptRecord& prompt, const SearchConfig& config, std::uint64_t seed,
                  const BackendBundle& bundle, std::size_t search_workers, SearchResult* result_out = nullptr);

/// Re-runs a record from its snapshot.
SearchResult replay(const RunRecord& record, const BackendBundle& bundle, std::size_t workers = 1);

struct BatchOptions {
    std::vector<std::uint64_t> seeds{0};
    std::size_t workers = 1;         // prompts in flight
    std::size_t search_workers = 1;  // per-layer pool inside each search
};

struct BatchSummary {
    std::size_t runs = 0;
    std::size_t failures = 0;
    double mean_score = 0.0;
    double stddev_score = 0.0;
    std::optional<double> mean_true_reward;
    std::int64_t generated_tokens = 0;
    double nominal_flops = 0.0;

    /// True when more than 10% of runs failed.
    bool too_many_failures() const noexcept { return failures * 10 > runs; }
};

void to_json(nlohmann::json& j, const BatchSummary& s);

struct BatchResult {
    BatchSummary summary;
    std::vector<RunRecord> records;
};

/// Runs every (prompt, seed) pair and appends records to `out` (JSONL) in
/// prompt-major order. Failed runs become records with an error.
BatchResult run_batch(const std::vector<PromptRecord>& dataset, const SearchConfig& config,
                      const BackendBundle& bundle, const BatchOptions& options, std::ostream* out);

BatchSummary summarize(const std::vector<RunRecord>& records);

struct PairedRow {
    std::string key;
    double a = 0.0;
    double b = 0.0;
    std::string winner;  // "a", "b" or "tie"
};

struct PairedSummary {
    std::vector<PairedRow> rows;
    double mean_diff = 0.0;  // a - b
    double t_statistic = 0.0;
    double p_one_sided = 1.0;  // H1: mean(a - b) > 0
    std::size_t wins_a = 0;
    std::size_t wins_b = 0;
    std::size_t ties = 0;
};

/// Pairs records by (prompt id, seed) and compares true rewards (final scores
/// when no true reward is recorded) with a one-sided paired t-test.
PairedSummary compare_runs(const std::vector<RunRecord>& a, const std::vector<RunRecord>& b);

/// Writes blinded pairs for an external judge; response order is randomized
/// per row from `seed`. Returns the number of rows.
std::size_t export_pairs(const std::vector<RunRecord>& a, const std::vector<RunRecord>& b, std::ostream& out,
                         std::uint64_t seed);

enum class SweepAxis { layers, children, roots };
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepRow {
    int value = 0;
    bool skipped = false;
    std::string reason;
    double mean_score = 0.0;
    double tokens = 0.0;         // mean generated tokens per run
    double nominal_flops = 0.0;  // mean per run
};

std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<int>& values, const SearchConfig& base,
                            const std::vector<PromptRecord>& dataset, const BackendBundle& bundle,
                            const BatchOptions& options);

std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

}  // namespace treebon
