// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace treebon {

enum class Method { bon, treebon, sbon, beam };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

/// Dense transformer shape used by the per-token cost estimate.
struct ModelDims {
    std::int64_t num_parameters = 8'000'000'000;
    std::int64_t num_layers = 32;
    std::int64_t token_dim = 4096;
    std::int64_t context_length = 8192;

    void validate() const;
};

/// 2 * (params + 2 * layers * dim * context).
double flops_per_token(const ModelDims& dims);

// Generation pass + reward/DPO scoring pass.
inline constexpr double kDefaultScorerPasses = 2.0;
// Rounded per-token cost of an 8B Llama-3 model.
inline constexpr double kDefaultFlopsPerToken = 2e10;
// Prompt length behind the reference FLOPs table. Not published with the
// table; recovered by inverting its N=8, l_max=192 entry.
inline constexpr std::int64_t kReferencePromptTokens = 30;

struct CostModel {
    double flops_per_token = kDefaultFlopsPerToken;
    double scorer_passes = kDefaultScorerPasses;
};

/// Analytic inference FLOPs for BoN or TreeBoN. Generated tokens are summed
/// in integers layer by layer, so TreeBoN equals BoN bit-for-bit whenever
/// N_children divides N.
double total_flops(Method method, std::int64_t N, std::int64_t l_max, std::int64_t N_layer, std::int64_t N_children,
                   std::int64_t prompt_tokens, double fpt, double scorer_passes = kDefaultScorerPasses);

/// Nominal generated tokens of SBoN with one rejection at l_max/2:
/// l_max * (1 - alpha/2) * N.
double sbon_nominal_tokens(std::int64_t N, std::int64_t l_max, double alpha);

/// Token and FLOPs accounting for one search run.
struct FlopsLedger {
    std::int64_t prompt_tokens = 0;
    // (phase name, tokens actually generated in it)
    std::vector<std::pair<std::string, std::int64_t>> generated_tokens;
    double flops_per_token = kDefaultFlopsPerToken;
    double scorer_passes = kDefaultScorerPasses;
    // From the generated counts.
    double total_flops = 0.0;
    // From the analytic formulas, ignoring early termination.
    double nominal_tokens = 0.0;
    double nominal_flops = 0.0;

    std::int64_t generated_total() const noexcept;
    void add_phase(std::string name, std::int64_t tokens);
    /// Recomputes total_flops from the phases.
    void seal();
};

void to_json(nlohmann::json& j, const FlopsLedger& l);
void from_json(const nlohmann::json& j, FlopsLedger& l);

}  // namespace treebon
