// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "treebon/budget.hpp"
#include "treebon/policy.hpp"
#include "treebon/reward.hpp"
#include "treebon/seqtree.hpp"

namespace treebon {

enum class FinalScorerKind { same_as_partial, external };

std::string_view to_string(FinalScorerKind k) noexcept;
FinalScorerKind parse_final_scorer(std::string_view name);

struct SearchConfig {
    Method method = Method::treebon;
    int N = 128;
    int l_max = 384;
    int N_children = 4;
    int N_layer = 4;
    PartialRewardVariant variant;
    FinalScorerKind final_scorer = FinalScorerKind::same_as_partial;
    double alpha = 0.3;   // sbon
    int beam_width = 128;  // beam
    // max_new_tokens and seed_stream are set per node by the search.
    SamplingParams sampling;
    std::uint64_t seed = 0;
    // Rank terminated candidates below every unterminated one.
    bool exclude_terminated = false;
    CostModel cost;

    void validate() const;
};

void to_json(nlohmann::json& j, const SearchConfig& c);
void from_json(const nlohmann::json& j, SearchConfig& c);

struct SearchBackends {
    const PolicyBackend& generator;
    // Supplies aligned/reference logprobs for the implicit partial reward.
    const PolicyBackend& scorer_model;
    // Required when final_scorer == external.
    const CandidateScorer* external = nullptr;
    std::size_t workers = 1;
};

struct SearchResult {
    TokenSeq best;
    double best_score = 0.0;
    NodeId best_node{};
    NodeStore tree;
    std::vector<LayerState> per_layer;
    FlopsLedger ledger;
    double wall_time = 0.0;
};

struct ScoredNode {
    NodeId id{};
    double score = 0.0;
};

/// Per-layer token budgets: l_max / N_layer each, the remainder going to the last layer.
std::vector<int> split_budget(int l_max, int N_layer);

/// The `keep` highest scores, ties to the lower id, ordered by (score desc, id asc).
std::vector<NodeId> select_top(std::span<const ScoredNode> candidates, std::size_t keep);

SearchResult run_bon(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends);
SearchResult run_treebon(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends);
SearchResult run_sbon(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends);
SearchResult run_beam(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends);

/// Dispatches on config.method.
SearchResult run_search(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends);

}  // namespace treebon
