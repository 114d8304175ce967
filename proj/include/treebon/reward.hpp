// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "treebon/policy.hpp"

namespace treebon {

enum class RewardKind { dpo_implicit, weighted, weighted_exp_decay, length_normalized, logprob_sum, simpo };

std::string_view to_string(RewardKind kind) noexcept;
RewardKind parse_reward_kind(std::string_view name);

struct PartialRewardVariant {
    RewardKind kind = RewardKind::weighted;
    double beta = 1.0;
    // Only weighted_exp_decay reads this.
    double lambda = 0.95;

    void validate() const;
    /// True for the variants built on the aligned/reference log-ratio.
    bool needs_reference() const noexcept;
};

void to_json(nlohmann::json& j, const PartialRewardVariant& v);
void from_json(const nlohmann::json& j, PartialRewardVariant& v);

struct RewardRequest {
    ScoredLogprobs aligned;
    std::optional<ScoredLogprobs> reference;
    PartialRewardVariant variant;
};

/// Per-token weights w_k for k = 0..K-1. Index k counts response tokens only.
/// weighted: 1/(k+1); weighted_exp_decay: lambda^k; otherwise 1.
std::vector<double> token_weights(const PartialRewardVariant& variant, std::size_t K);

/// w_k * d_k where d_k is the aligned/reference log-ratio (ratio variants) or
/// the aligned logprob (likelihood variants). beta is not applied.
std::vector<double> reward_terms(const RewardRequest& req);

/// Partial reward of the whole response in `req`.
double partial_reward(const RewardRequest& req);

/// Partial reward of every response prefix y_{:k+1}, k = 0..K-1. The last
/// entry equals partial_reward(req) bit-for-bit.
std::vector<double> prefix_partial_rewards(const RewardRequest& req);

/// Arithmetic mean of process-reward step scores.
double prm_aggregate(std::span<const double> step_rewards);

/// Scores a candidate sequence for selection. Throws TransportError when a
/// remote dependency gives up; the search turns that into -inf.
class CandidateScorer {
public:
    virtual ~CandidateScorer() = default;
    virtual double score(const TokenSeq& seq) const = 0;
    virtual std::string describe() const = 0;
};

/// Implicit reward from teacher-forced aligned/reference logprobs.
class ImplicitRewardScorer final : public CandidateScorer {
public:
    ImplicitRewardScorer(const PolicyBackend& model, PartialRewardVariant variant);

    double score(const TokenSeq& seq) const override;
    std::string describe() const override;

    RewardRequest request(const TokenSeq& seq) const;
    std::vector<double> prefix_scores(const TokenSeq& seq) const;
    const PartialRewardVariant& variant() const noexcept { return variant_; }

private:
    const PolicyBackend& model_;
    PartialRewardVariant variant_;
};

/// Synthetic reward: number of occurrences of `target` in the response.
class TargetCountScorer final : public CandidateScorer {
public:
    explicit TargetCountScorer(TokenId target) : target_(target) {}
    double score(const TokenSeq& seq) const override;
    std::string describe() const override;

private:
    TokenId target_;
};

/// Synthetic reward that only looks at the final response token.
class LastTokenScorer final : public CandidateScorer {
public:
    explicit LastTokenScorer(std::function<double(TokenId)> f) : f_(std::move(f)) {}
    double score(const TokenSeq& seq) const override;
    std::string describe() const override { return "last-token"; }

private:
    std::function<double(TokenId)> f_;
};

class ConstantScorer final : public CandidateScorer {
public:
    explicit ConstantScorer(double value) : value_(value) {}
    double score(const TokenSeq&) const override { return value_; }
    std::string describe() const override { return "constant(" + std::to_string(value_) + ")"; }

private:
    double value_;
};

/// External full-sequence reward model working on text.
class RewardModel {
public:
    virtual ~RewardModel() = default;
    virtual double reward(std::string_view prompt, std::string_view response) const = 0;
    /// Per-step scores for process reward models.
    virtual std::vector<double> step_rewards(std::string_view prompt, std::string_view response) const;
    virtual std::string describe() const = 0;
};

class ConstantRewardModel final : public RewardModel {
public:
    explicit ConstantRewardModel(double c) : c_(c) {}
    double reward(std::string_view, std::string_view) const override { return c_; }
    std::string describe() const override { return "constant"; }

private:
    double c_;
};

/// Counts whitespace-separated occurrences of `word` in the response.
class WordCountRewardModel final : public RewardModel {
public:
    explicit WordCountRewardModel(std::string word) : word_(std::move(word)) {}
    double reward(std::string_view prompt, std::string_view response) const override;
    std::string describe() const override { return "word-count(" + word_ + ")"; }

private:
    std::string word_;
};

/// Pass-through to the reward model. Transport failures after retries are
/// logged and returned as -inf.
double full_reward(const RewardModel& scorer, std::string_view prompt, std::string_view response);

/// Adapts a text reward model to candidate scoring. In PRM mode the step
/// scores are averaged.
class RewardModelScorer final : public CandidateScorer {
public:
    RewardModelScorer(const RewardModel& model, const PolicyBackend& detokenizer, bool prm_mode = false);
    double score(const TokenSeq& seq) const override;
    std::string describe() const override;

private:
    const RewardModel& model_;
    const PolicyBackend& detokenizer_;
    bool prm_mode_;
};

}  // namespace treebon
