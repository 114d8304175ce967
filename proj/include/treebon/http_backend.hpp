// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON-over-HTTP backends for completion servers and reward models.
//
// Policy server endpoints:
//   GET  /capabilities  -> {teacher_forcing, tokenizer, distribution, eos_token, eos_text, vocab_size}
//   POST /complete      -> {tokens | chunks, logprobs, finished}
//   POST /score         -> {logprobs}
//   POST /distribution  -> {top_logprobs: [{token | chunk, logprob}]}
//   POST /tokenize, /detokenize (optional; presence selects token-id mode)
// Reward server:
//   POST /reward        -> {score} or {step_scores}
//
// Without a tokenizer the engine works on whitespace-free text chunks and
// assigns them local ids.

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "treebon/policy.hpp"
#include "treebon/reward.hpp"

namespace treebon {

struct RemoteConfig {
    std::string base_url;
    std::string auth_token;
    int max_attempts = 3;
    std::chrono::milliseconds backoff{200};
    std::chrono::seconds timeout{120};

    /// Reads the URL from `url_var` and the bearer token from TREEBON_AUTH_TOKEN.
    static RemoteConfig from_env(const char* url_var);
};

inline constexpr const char* kPolicyUrlEnv = "TREEBON_POLICY_URL";
inline constexpr const char* kRewardUrlEnv = "TREEBON_REWARD_URL";
inline constexpr const char* kAuthTokenEnv = "TREEBON_AUTH_TOKEN";

/// POST/GET JSON with bounded retries and exponential backoff. Connection
/// failures, 429 and 5xx are retried; other 4xx fail immediately.
class JsonHttpClient {
public:
    explicit JsonHttpClient(RemoteConfig config);

    nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
    nlohmann::json get(const std::string& path) const;
    const RemoteConfig& config() const noexcept { return config_; }

private:
    nlohmann::json request(const std::string& method, const std::string& path, const nlohmann::json* body) const;

    RemoteConfig config_;
};

struct RemoteCapabilities {
    bool teacher_forcing = false;
    bool tokenizer = false;
    bool distribution = false;
    std::optional<TokenId> eos_token;
    std::string eos_text = "</s>";
    std::optional<int> vocab_size;
    nlohmann::json raw;
};

class RemotePolicyBackend final : public PolicyBackend {
public:
    /// Probes /capabilities; throws CapabilityError if teacher forcing is missing.
    explicit RemotePolicyBackend(RemoteConfig config);

    Continuation continue_sequence(const TokenSeq& prefix, const SamplingParams& params) const override;
    ScoredLogprobs score_sequence(const TokenSeq& seq, ModelTag tag) const override;
    std::vector<double> next_token_distribution(const TokenSeq& prefix) const override;
    std::optional<TokenId> eos_id() const override;
    std::vector<TokenId> tokenize(std::string_view text) const override;
    std::string detokenize(std::span<const TokenId> tokens) const override;
    std::string describe() const override;

    const RemoteCapabilities& capabilities() const noexcept { return caps_; }
    bool token_id_mode() const noexcept { return caps_.tokenizer; }

private:
    TokenId intern(const std::string& chunk) const;
    std::string chunk(TokenId id) const;
    nlohmann::json prompt_field(std::span<const TokenId> tokens) const;
    void check_vocab(std::span<const TokenId> tokens) const;

    JsonHttpClient client_;
    RemoteCapabilities caps_;
    mutable std::mutex vocab_mu_;
    mutable std::vector<std::string> chunks_;
    mutable std::unordered_map<std::string, TokenId> chunk_ids_;
};

class HttpRewardModel final : public RewardModel {
public:
    explicit HttpRewardModel(RemoteConfig config);
    double reward(std::string_view prompt, std::string_view response) const override;
    std::vector<double> step_rewards(std::string_view prompt, std::string_view response) const override;
    std::string describe() const override;

private:
    JsonHttpClient client_;
};

}  // namespace treebon
