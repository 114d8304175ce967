// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/reward.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "treebon/error.hpp"
#include "treebon/kernels.hpp"

namespace treebon {

std::string_view to_string(RewardKind kind) noexcept {
    switch (kind) {
        case RewardKind::dpo_implicit: return "dpo_implicit";
        case RewardKind::weighted: return "weighted";
        case RewardKind::weighted_exp_decay: return "weighted_exp_decay";
        case RewardKind::length_normalized: return "length_normalized";
        case RewardKind::logprob_sum: return "logprob_sum";
        case RewardKind::simpo: return "simpo";
    }
    return "unknown";
}

RewardKind parse_reward_kind(std::string_view name) {
    for (auto k : {RewardKind::dpo_implicit, RewardKind::weighted, RewardKind::weighted_exp_decay,
                   RewardKind::length_normalized, RewardKind::logprob_sum, RewardKind::simpo}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown reward variant '" + std::string(name) + "'");
}

void PartialRewardVariant::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("lambda must lie in (0, 1)");
}

bool PartialRewardVariant::needs_reference() const noexcept {
    return kind != RewardKind::logprob_sum && kind != RewardKind::simpo;
}

void to_json(nlohmann::json& j, const PartialRewardVariant& v) {
    j = {{"kind", to_string(v.kind)}, {"beta", v.beta}, {"lambda", v.lambda}};
}

void from_json(const nlohmann::json& j, PartialRewardVariant& v) {
    v.kind = parse_reward_kind(j.at("kind").get<std::string>());
    v.beta = j.at("beta").get<double>();
    v.lambda = j.at("lambda").get<double>();
}

std::vector<double> token_weights(const PartialRewardVariant& variant, std::size_t K) {
    std::vector<double> w(K, 1.0);
    if (variant.kind == RewardKind::weighted) {
        for (std::size_t k = 0; k < K; ++k) w[k] = 1.0 / static_cast<double>(k + 1);
    } else if (variant.kind == RewardKind::weighted_exp_decay) {
        for (std::size_t k = 0; k < K; ++k) w[k] = std::pow(variant.lambda, static_cast<double>(k));
    }
    return w;
}

namespace {

void check_request(const RewardRequest& req) {
    req.variant.validate();
    const auto& a = req.aligned;
    if (a.logprobs.empty()) throw Error("partial reward needs at least one response token");
    if (a.logprobs.size() != a.token_ids.size()) throw Error("aligned logprobs and token ids differ in length");
    if (!req.variant.needs_reference()) return;
    if (!req.reference) {
        throw ConfigError(std::string("reward variant ") + std::string(to_string(req.variant.kind)) +
                          " needs reference-model logprobs");
    }
    const auto& r = *req.reference;
    if (r.logprobs.size() != a.logprobs.size()) {
        throw Error("aligned and reference logprobs differ in length (" + std::to_string(a.logprobs.size()) +
                    " vs " + std::to_string(r.logprobs.size()) + ")");
    }
    if (r.token_ids != a.token_ids) throw Error("aligned and reference scored different tokens");
}

// Final value from the running sum over the first k tokens.
double finish(const PartialRewardVariant& v, double sum, std::size_t k) {
    switch (v.kind) {
        case RewardKind::dpo_implicit:
        case RewardKind::weighted:
        case RewardKind::weighted_exp_decay: return v.beta * sum;
        case RewardKind::length_normalized: return (v.beta * sum) / static_cast<double>(k);
        case RewardKind::logprob_sum: return sum;
        case RewardKind::simpo: return sum / static_cast<double>(k);
    }
    return sum;
}

}  // namespace

std::vector<double> reward_terms(const RewardRequest& req) {
    check_request(req);
    const std::size_t K = req.aligned.logprobs.size();
    const auto w = token_weights(req.variant, K);
    std::vector<double> out(K);
    std::span<const double> ref;
    if (req.variant.needs_reference()) ref = req.reference->logprobs;
    kernels::weighted_diff(req.aligned.logprobs, ref, w, out);
    return out;
}

double partial_reward(const RewardRequest& req) {
    const auto terms = reward_terms(req);
    double sum = 0.0;
    for (double t : terms) sum += t;
    return finish(req.variant, sum, terms.size());
}

std::vector<double> prefix_partial_rewards(const RewardRequest& req) {
    const auto terms = reward_terms(req);
    std::vector<double> out(terms.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        sum += terms[k];
        out[k] = finish(req.variant, sum, k + 1);
    }
    return out;
}

double prm_aggregate(std::span<const double> step_rewards) {
    if (step_rewards.empty()) throw Error("prm_aggregate needs at least one step");
    double sum = 0.0;
    for (double s : step_rewards) sum += s;
    return sum / static_cast<double>(step_rewards.size());
}

ImplicitRewardScorer::ImplicitRewardScorer(const PolicyBackend& model, PartialRewardVariant variant)
    : model_(model), variant_(variant) {
    variant_.validate();
}

RewardRequest ImplicitRewardScorer::request(const TokenSeq& seq) const {
    RewardRequest req;
    req.variant = variant_;
    req.aligned = model_.score_sequence(seq, ModelTag::aligned);
    if (variant_.needs_reference()) req.reference = model_.score_sequence(seq, ModelTag::reference);
    return req;
}

double ImplicitRewardScorer::score(const TokenSeq& seq) const { return partial_reward(request(seq)); }

std::vector<double> ImplicitRewardScorer::prefix_scores(const TokenSeq& seq) const {
    return prefix_partial_rewards(request(seq));
}

std::string ImplicitRewardScorer::describe() const {
    std::ostringstream os;
    os << "implicit(" << to_string(variant_.kind) << ", beta=" << variant_.beta;
    if (variant_.kind == RewardKind::weighted_exp_decay) os << ", lambda=" << variant_.lambda;
    os << ")";
    return os.str();
}

double TargetCountScorer::score(const TokenSeq& seq) const {
    return static_cast<double>(kernels::count_token(seq.response(), target_));
}

std::string TargetCountScorer::describe() const { return "target-count(" + std::to_string(target_) + ")"; }

double LastTokenScorer::score(const TokenSeq& seq) const {
    if (seq.response_len() == 0) throw Error("last-token scorer needs a response token");
    return f_(seq.response().back());
}

std::vector<double> RewardModel::step_rewards(std::string_view, std::string_view) const {
    throw CapabilityError(describe() + " does not provide step rewards");
}

double WordCountRewardModel::reward(std::string_view, std::string_view response) const {
    std::istringstream in{std::string(response)};
    std::string word;
    int count = 0;
    while (in >> word) count += word == word_;
    return count;
}

double full_reward(const RewardModel& scorer, std::string_view prompt, std::string_view response) {
    try {
        const double r = scorer.reward(prompt, response);
        spdlog::debug("full_reward {} -> {}", scorer.describe(), r);
        return r;
    } catch (const TransportError& e) {
        spdlog::warn("full_reward {} failed: {}", scorer.describe(), e.what());
        return -std::numeric_limits<double>::infinity();
    }
}

RewardModelScorer::RewardModelScorer(const RewardModel& model, const PolicyBackend& detokenizer, bool prm_mode)
    : model_(model), detokenizer_(detokenizer), prm_mode_(prm_mode) {}

double RewardModelScorer::score(const TokenSeq& seq) const {
    const auto prompt = detokenizer_.detokenize(seq.prompt());
    const auto response = detokenizer_.detokenize(seq.response());
    if (prm_mode_) return prm_aggregate(model_.step_rewards(prompt, response));
    return model_.reward(prompt, response);
}

std::string RewardModelScorer::describe() const {
    return (prm_mode_ ? "prm:" : "rm:") + model_.describe();
}

}  // namespace treebon
