// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "treebon/error.hpp"

namespace treebon {

void SamplingParams::validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("temperature must be positive, got " + std::to_string(temperature));
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1], got " + std::to_string(top_p));
    if (max_new_tokens <= 0) throw ConfigError("max_new_tokens must be positive");
}

std::string_view to_string(ModelTag tag) noexcept {
    return tag == ModelTag::aligned ? "aligned" : "reference";
}

std::vector<double> PolicyBackend::next_token_distribution(const TokenSeq&) const {
    throw CapabilityError(describe() + " does not expose next-token distributions");
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t run_seed, std::uint64_t node_id) noexcept {
    return splitmix64(splitmix64(run_seed) ^ (node_id * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
}

std::vector<TokenId> nucleus(std::span<const double> probs, double top_p) {
    std::vector<TokenId> order(probs.size());
    std::iota(order.begin(), order.end(), TokenId{0});
    const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
    if (top_p >= 1.0) {
        std::erase_if(order, [&](TokenId t) { return probs[static_cast<std::size_t>(t)] <= 0.0; });
        return order;
    }
    std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
        return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    });
    double mass = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        mass += probs[static_cast<std::size_t>(order[keep])];
        ++keep;
        if (mass >= top_p * total) break;
    }
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return order;
}

TokenId sample_token(std::span<const double> probs, double temperature, double top_p, StreamRng& rng) {
    std::vector<double> q(probs.begin(), probs.end());
    if (temperature != 1.0) {
        // p^(1/T) == softmax(logits / T) up to normalization.
        double peak = 0.0;
        for (double p : q) peak = std::max(peak, p);
        for (double& p : q) p = p > 0.0 ? std::pow(p / peak, 1.0 / temperature) : 0.0;
    }
    const auto kept = nucleus(q, top_p);
    if (kept.empty()) throw Error("cannot sample from an all-zero distribution");

    double mass = 0.0;
    for (TokenId t : kept) mass += q[static_cast<std::size_t>(t)];
    const double u = rng.uniform() * mass;
    double acc = 0.0;
    for (TokenId t : kept) {
        acc += q[static_cast<std::size_t>(t)];
        if (u < acc) return t;
    }
    return kept.back();
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

}  // namespace treebon
