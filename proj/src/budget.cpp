// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/budget.hpp"

#include "treebon/error.hpp"

namespace treebon {

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::bon: return "bon";
        case Method::treebon: return "treebon";
        case Method::sbon: return "sbon";
        case Method::beam: return "beam";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (auto m : {Method::bon, Method::treebon, Method::sbon, Method::beam}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

void ModelDims::validate() const {
    if (num_parameters <= 0 || num_layers < 0 || token_dim <= 0 || context_length <= 0) {
        throw ConfigError("model dimensions must be positive");
    }
}

double flops_per_token(const ModelDims& dims) {
    dims.validate();
    const double attention = 2.0 * static_cast<double>(dims.num_layers) * static_cast<double>(dims.token_dim) *
                             static_cast<double>(dims.context_length);
    return 2.0 * (static_cast<double>(dims.num_parameters) + attention);
}

double total_flops(Method method, std::int64_t N, std::int64_t l_max, std::int64_t N_layer, std::int64_t N_children,
                   std::int64_t prompt_tokens, double fpt, double scorer_passes) {
    if (N < 1 || l_max < 1) throw ConfigError("N and l_max must be positive");
    if (prompt_tokens < 0) throw ConfigError("prompt_tokens must be non-negative");
    std::int64_t generated = 0;
    switch (method) {
        case Method::bon: generated = l_max * N; break;
        case Method::treebon: {
            if (N_layer < 1 || N_layer > l_max) throw ConfigError("need 1 <= N_layer <= l_max");
            if (N_children < 1 || N % N_children != 0) throw ConfigError("N_children must divide N");
            // Root layer, then N/N_children survivors with N_children children each.
            const std::int64_t base = l_max / N_layer;
            const std::int64_t last = l_max - base * (N_layer - 1);
            generated = (N_layer == 1 ? last : base) * N;
            for (std::int64_t i = 2; i <= N_layer; ++i) {
                generated += (i == N_layer ? last : base) * N_children * (N / N_children);
            }
            break;
        }
        default: throw ConfigError("analytic FLOPs are defined for bon and treebon only");
    }
    return scorer_passes * (static_cast<double>(prompt_tokens) * fpt + static_cast<double>(generated) * fpt);
}

double sbon_nominal_tokens(std::int64_t N, std::int64_t l_max, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
    return static_cast<double>(l_max) * (1.0 - alpha / 2.0) * static_cast<double>(N);
}

std::int64_t FlopsLedger::generated_total() const noexcept {
    std::int64_t total = 0;
    for (const auto& [name, tokens] : generated_tokens) total += tokens;
    return total;
}

void FlopsLedger::add_phase(std::string name, std::int64_t tokens) {
    generated_tokens.emplace_back(std::move(name), tokens);
    seal();
}

void FlopsLedger::seal() {
    total_flops = scorer_passes * (static_cast<double>(prompt_tokens) * flops_per_token +
                                   static_cast<double>(generated_total()) * flops_per_token);
}

void to_json(nlohmann::json& j, const FlopsLedger& l) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& [name, tokens] : l.generated_tokens) phases.push_back({{"phase", name}, {"tokens", tokens}});
    j = {{"prompt_tokens", l.prompt_tokens},
         {"generated_tokens", phases},
         {"generated_total", l.generated_total()},
         {"flops_per_token", l.flops_per_token},
         {"scorer_passes", l.scorer_passes},
         {"total_flops", l.total_flops},
         {"nominal_tokens", l.nominal_tokens},
         {"nominal_flops", l.nominal_flops}};
}

void from_json(const nlohmann::json& j, FlopsLedger& l) {
    l.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
    l.generated_tokens.clear();
    for (const auto& p : j.at("generated_tokens")) {
        l.generated_tokens.emplace_back(p.at("phase").get<std::string>(), p.at("tokens").get<std::int64_t>());
    }
    l.flops_per_token = j.at("flops_per_token").get<double>();
    l.scorer_passes = j.at("scorer_passes").get<double>();
    l.total_flops = j.at("total_flops").get<double>();
    l.nominal_tokens = j.at("nominal_tokens").get<double>();
    l.nominal_flops = j.at("nominal_flops").get<double>();
}

}  // namespace treebon
