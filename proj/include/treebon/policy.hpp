// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treebon/seqtree.hpp"

namespace treebon {

struct SamplingParams {
    double temperature = 1.0;
    double top_p = 1.0;
    int max_new_tokens = 1;
    std::uint64_t seed_stream = 0;

    /// Throws ConfigError unless temperature > 0, 0 < top_p <= 1, max_new_tokens > 0.
    void validate() const;
};

enum class ModelTag { aligned, reference };

std::string_view to_string(ModelTag tag) noexcept;

/// Teacher-forced natural-log probabilities of each response token.
struct ScoredLogprobs {
    std::vector<TokenId> token_ids;
    std::vector<double> logprobs;
    ModelTag model_tag = ModelTag::aligned;
};

struct Continuation {
    std::vector<TokenId> segment;
    // Untempered log-probability of each sampled token under the generator.
    std::vector<double> logprobs;
    bool terminated = false;
};

/// A language-model backend: samples from the base policy and scores fixed
/// sequences under the aligned and reference models.
///
/// Implementations must be callable from several threads at once.
class PolicyBackend {
public:
    virtual ~PolicyBackend() = default;

    /// Samples up to params.max_new_tokens tokens after `prefix`. Identical
    /// (prefix, params) must give identical output.
    virtual Continuation continue_sequence(const TokenSeq& prefix, const SamplingParams& params) const = 0;

    /// One logprob per response token, each conditioned on prompt + earlier response tokens.
    virtual ScoredLogprobs score_sequence(const TokenSeq& seq, ModelTag tag) const = 0;

    /// Generator's next-token distribution after `prefix`, indexed by token id.
    /// Backends that only see a top-k slice return it renormalized.
    virtual std::vector<double> next_token_distribution(const TokenSeq& prefix) const;

    virtual std::optional<TokenId> eos_id() const = 0;
    virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;
    virtual std::string detokenize(std::span<const TokenId> tokens) const = 0;
    virtual std::string describe() const = 0;
};

/// Seed of the RNG stream owned by one tree node: a hash of (run_seed, node_id),
/// so results do not depend on the order nodes are generated in.
std::uint64_t stream_seed(std::uint64_t run_seed, std::uint64_t node_id) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Portable uniform draws: std::mt19937_64 output is fixed by the standard,
/// the distribution classes are not.
class StreamRng {
public:
    explicit StreamRng(std::uint64_t seed) : engine_(seed) {}
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// Token ids of the smallest highest-probability set whose mass reaches
/// top_p (ties broken toward lower ids), returned in ascending id order.
std::vector<TokenId> nucleus(std::span<const double> probs, double top_p);

/// Draws one token from `probs` after temperature scaling and nucleus truncation.
TokenId sample_token(std::span<const double> probs, double temperature, double top_p, StreamRng& rng);

/// Shannon entropy in nats; zero-probability entries contribute nothing.
double entropy(std::span<const double> probs);

}  // namespace treebon
