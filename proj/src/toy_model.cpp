// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/toy_model.hpp"

#include <cmath>
#include <sstream>

#include "treebon/error.hpp"

namespace treebon {

ToyModelTable::ToyModelTable(int vocab_size, int order, std::vector<double> probs, std::optional<TokenId> eos_id)
    : vocab_size_(vocab_size), order_(order), probs_(std::move(probs)), eos_id_(eos_id) {
    if (vocab_size_ < 2) throw ConfigError("toy vocabulary needs at least 2 tokens");
    if (order_ != 0 && order_ != 1) throw ConfigError("toy table order must be 0 or 1");
    if (eos_id_ && (*eos_id_ < 0 || *eos_id_ >= vocab_size_)) throw ConfigError("eos id outside vocabulary");
    const std::size_t v = static_cast<std::size_t>(vocab_size_);
    if (probs_.size() != rows() * v) {
        throw ConfigError("toy table has " + std::to_string(probs_.size()) + " entries, expected " +
                          std::to_string(rows() * v));
    }
    for (std::size_t r = 0; r < rows(); ++r) {
        double sum = 0.0;
        for (std::size_t t = 0; t < v; ++t) {
            const double p = probs_[r * v + t];
            if (!(p >= 0.0)) throw ConfigError("toy table row " + std::to_string(r) + " has a negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw ConfigError("toy table row " + std::to_string(r) + " sums to " + std::to_string(sum));
        }
    }
}

ToyModelTable ToyModelTable::constant(int vocab_size, TokenId token, std::optional<TokenId> eos_id) {
    std::vector<double> p(static_cast<std::size_t>(vocab_size), 0.0);
    p.at(static_cast<std::size_t>(token)) = 1.0;
    return ToyModelTable(vocab_size, 0, std::move(p), eos_id);
}

ToyModelTable ToyModelTable::uniform(int vocab_size, std::optional<TokenId> eos_id) {
    return ToyModelTable(vocab_size, 0, std::vector<double>(static_cast<std::size_t>(vocab_size), 1.0 / vocab_size),
                         eos_id);
}

ToyModelTable ToyModelTable::random(int vocab_size, int order, std::uint64_t seed, std::optional<TokenId> eos_id,
                                    double eos_prob) {
    if (vocab_size < 2) throw ConfigError("toy vocabulary needs at least 2 tokens");
    if (eos_prob < 0.0 || eos_prob >= 1.0) throw ConfigError("eos_prob must lie in [0, 1)");
    const std::size_t v = static_cast<std::size_t>(vocab_size);
    const std::size_t nrows = order == 0 ? 1 : v;
    StreamRng rng(splitmix64(seed));
    std::vector<double> probs(nrows * v, 0.0);
    for (std::size_t r = 0; r < nrows; ++r) {
        double* row = probs.data() + r * v;
        double sum = 0.0;
        for (std::size_t t = 0; t < v; ++t) {
            if (eos_id && static_cast<TokenId>(t) == *eos_id) continue;
            row[t] = -std::log1p(-rng.uniform()) + 1e-3;
            sum += row[t];
        }
        const double body = eos_id ? 1.0 - eos_prob : 1.0;
        for (std::size_t t = 0; t < v; ++t) row[t] = row[t] / sum * body;
        if (eos_id) row[static_cast<std::size_t>(*eos_id)] = eos_prob;
    }
    return ToyModelTable(vocab_size, order, std::move(probs), eos_id);
}

std::span<const double> ToyModelTable::row_at(std::size_t r) const {
    const std::size_t v = static_cast<std::size_t>(vocab_size_);
    return std::span(probs_).subspan(r * v, v);
}

std::span<const double> ToyModelTable::row(std::span<const TokenId> context) const {
    if (order_ == 0) return row_at(0);
    if (context.empty()) throw ConfigError("order-1 toy table needs a non-empty context");
    return row_at(static_cast<std::size_t>(context.back()));
}

ToyModelTable ToyModelTable::tilted(TokenId target, double tilt) const {
    if (target < 0 || target >= vocab_size_) throw ConfigError("tilt target outside vocabulary");
    const std::size_t v = static_cast<std::size_t>(vocab_size_);
    std::vector<double> out(probs_);
    const double boost = std::exp(tilt);
    for (std::size_t r = 0; r < rows(); ++r) {
        double* row = out.data() + r * v;
        row[target] *= boost;
        double z = 0.0;
        for (std::size_t t = 0; t < v; ++t) z += row[t];
        for (std::size_t t = 0; t < v; ++t) row[t] /= z;
    }
    return ToyModelTable(vocab_size_, order_, std::move(out), eos_id_);
}

ToyBackend::ToyBackend(ToyModelTable generator, ToyModelTable aligned, ToyModelTable reference)
    : generator_(std::move(generator)), aligned_(std::move(aligned)), reference_(std::move(reference)) {
    if (aligned_.vocab_size() != generator_.vocab_size() || reference_.vocab_size() != generator_.vocab_size()) {
        throw ConfigError("toy backend tables disagree on vocabulary size");
    }
}

ToyBackend::ToyBackend(const ToyModelTable& single) : ToyBackend(single, single, single) {}

void ToyBackend::check_vocab(std::span<const TokenId> tokens) const {
    for (TokenId t : tokens) {
        if (t < 0 || t >= generator_.vocab_size()) {
            throw ConfigError("token " + std::to_string(t) + " outside toy vocabulary of size " +
                              std::to_string(generator_.vocab_size()));
        }
    }
}

Continuation ToyBackend::continue_sequence(const TokenSeq& prefix, const SamplingParams& params) const {
    params.validate();
    if (prefix.size() == 0) throw ConfigError("continue_sequence needs a non-empty prefix");
    check_vocab(prefix.tokens());

    Continuation out;
    if (prefix.terminated()) {
        out.terminated = true;
        return out;
    }
    std::vector<TokenId> context(prefix.tokens().begin(), prefix.tokens().end());
    StreamRng rng(params.seed_stream);
    const auto eos = generator_.eos_id();
    for (int i = 0; i < params.max_new_tokens; ++i) {
        const auto row = generator_.row(context);
        const TokenId tok = sample_token(row, params.temperature, params.top_p, rng);
        out.segment.push_back(tok);
        out.logprobs.push_back(std::log(row[static_cast<std::size_t>(tok)]));
        context.push_back(tok);
        if (eos && tok == *eos) {
            out.terminated = true;
            break;
        }
    }
    return out;
}

ScoredLogprobs ToyBackend::score_sequence(const TokenSeq& seq, ModelTag tag) const {
    if (seq.response_len() == 0) throw ConfigError("score_sequence needs at least one response token");
    check_vocab(seq.tokens());
    const auto& tbl = table(tag);
    const auto tokens = seq.tokens();
    ScoredLogprobs out;
    out.model_tag = tag;
    out.token_ids.assign(seq.response().begin(), seq.response().end());
    out.logprobs.reserve(seq.response_len());
    for (std::size_t k = seq.prompt_len(); k < tokens.size(); ++k) {
        const auto row = tbl.row(tokens.first(k));
        out.logprobs.push_back(std::log(row[static_cast<std::size_t>(tokens[k])]));
    }
    return out;
}

std::vector<double> ToyBackend::next_token_distribution(const TokenSeq& prefix) const {
    check_vocab(prefix.tokens());
    const auto row = generator_.row(prefix.tokens());
    return {row.begin(), row.end()};
}

std::vector<TokenId> ToyBackend::tokenize(std::string_view text) const {
    const int v = generator_.vocab_size();
    const auto eos = generator_.eos_id();
    std::vector<TokenId> out;
    out.reserve(text.size());
    for (unsigned char c : text) {
        auto t = static_cast<TokenId>(c % v);
        if (eos && t == *eos) t = (t + 1) % v;
        out.push_back(t);
    }
    return out;
}

std::string ToyBackend::detokenize(std::span<const TokenId> tokens) const {
    const auto eos = generator_.eos_id();
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += (eos && tokens[i] == *eos) ? std::string("</s>") : "t" + std::to_string(tokens[i]);
    }
    return out;
}

std::string ToyBackend::describe() const {
    std::ostringstream os;
    os << "toy(vocab=" << generator_.vocab_size() << ", order=" << generator_.order() << ")";
    return os.str();
}

std::optional<TokenId> ToyTaskSpec::eos_id() const {
    if (eos_prob > 0.0) return vocab_size - 1;
    return std::nullopt;
}

ToyBackend make_tilted_task(const ToyTaskSpec& spec) {
    if (spec.eos_id() && spec.target == *spec.eos_id()) throw ConfigError("tilt target must not be eos");
    auto reference = ToyModelTable::random(spec.vocab_size, spec.order, spec.seed, spec.eos_id(), spec.eos_prob);
    auto aligned = reference.tilted(spec.target, spec.tilt);
    return ToyBackend(reference, std::move(aligned), reference);
}

void to_json(nlohmann::json& j, const ToyTaskSpec& s) {
    j = {{"vocab_size", s.vocab_size}, {"order", s.order}, {"target", s.target},
         {"tilt", s.tilt},             {"eos_prob", s.eos_prob}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ToyTaskSpec& s) {
    s.vocab_size = j.at("vocab_size").get<int>();
    s.order = j.at("order").get<int>();
    s.target = j.at("target").get<TokenId>();
    s.tilt = j.at("tilt").get<double>();
    s.eos_prob = j.at("eos_prob").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace treebon
