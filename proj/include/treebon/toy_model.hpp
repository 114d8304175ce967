// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "treebon/policy.hpp"

namespace treebon {

/// Conditional next-token table of order 0 (one row) or 1 (one row per
/// previous token). Rows sum to 1 within 1e-12.
class ToyModelTable {
public:
    ToyModelTable(int vocab_size, int order, std::vector<double> probs, std::optional<TokenId> eos_id);

    /// Order-0 table that always emits `token`.
    static ToyModelTable constant(int vocab_size, TokenId token, std::optional<TokenId> eos_id = std::nullopt);
    /// Order-0 uniform table.
    static ToyModelTable uniform(int vocab_size, std::optional<TokenId> eos_id = std::nullopt);
    /// Random rows (Dirichlet(1) shape) with a fixed eos mass per row.
    static ToyModelTable random(int vocab_size, int order, std::uint64_t seed, std::optional<TokenId> eos_id,
                                double eos_prob);

    int vocab_size() const noexcept { return vocab_size_; }
    int order() const noexcept { return order_; }
    std::optional<TokenId> eos_id() const noexcept { return eos_id_; }
    std::size_t rows() const noexcept { return order_ == 0 ? 1 : static_cast<std::size_t>(vocab_size_); }

    /// Row for the context whose last token is `context.back()` (order 1) or the
    /// single row (order 0).
    std::span<const double> row(std::span<const TokenId> context) const;
    std::span<const double> row_at(std::size_t r) const;

    /// Exponential tilt: each row reweighted by exp(tilt * [token == target]) and renormalized.
    ToyModelTable tilted(TokenId target, double tilt) const;

private:
    int vocab_size_;
    int order_;
    std::vector<double> probs_;
    std::optional<TokenId> eos_id_;
};

/// Exact in-process backend over three tables: the generator (base policy),
/// the aligned model and the reference model.
class ToyBackend final : public PolicyBackend {
public:
    ToyBackend(ToyModelTable generator, ToyModelTable aligned, ToyModelTable reference);
    explicit ToyBackend(const ToyModelTable& single);

    Continuation continue_sequence(const TokenSeq& prefix, const SamplingParams& params) const override;
    ScoredLogprobs score_sequence(const TokenSeq& seq, ModelTag tag) const override;
    std::vector<double> next_token_distribution(const TokenSeq& prefix) const override;
    std::optional<TokenId> eos_id() const override { return generator_.eos_id(); }
    /// One token per byte, folded into the vocabulary and kept off eos.
    std::vector<TokenId> tokenize(std::string_view text) const override;
    std::string detokenize(std::span<const TokenId> tokens) const override;
    std::string describe() const override;

    const ToyModelTable& generator() const noexcept { return generator_; }
    const ToyModelTable& table(ModelTag tag) const noexcept { return tag == ModelTag::aligned ? aligned_ : reference_; }

private:
    void check_vocab(std::span<const TokenId> tokens) const;

    ToyModelTable generator_;
    ToyModelTable aligned_;
    ToyModelTable reference_;
};

/// Synthetic alignment task: a random reference table (which also generates)
/// and an aligned table exponentially tilted toward `target`. The true reward
/// of a response is its count of `target`.
struct ToyTaskSpec {
    int vocab_size = 8;
    int order = 1;
    TokenId target = 3;
    double tilt = 1.5;
    // eos is the last id when eos_prob > 0; otherwise the table never terminates.
    double eos_prob = 0.0;
    std::uint64_t seed = 7;

    std::optional<TokenId> eos_id() const;
};

ToyBackend make_tilted_task(const ToyTaskSpec& spec);

void to_json(nlohmann::json& j, const ToyTaskSpec& s);
void from_json(const nlohmann::json& j, ToyTaskSpec& s);

}  // namespace treebon
