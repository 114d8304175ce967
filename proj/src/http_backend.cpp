// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/http_backend.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "treebon/error.hpp"

namespace treebon {

RemoteConfig RemoteConfig::from_env(const char* url_var) {
    RemoteConfig cfg;
    const char* url = std::getenv(url_var);
    if (url == nullptr || *url == '\0') throw ConfigError(std::string("environment variable ") + url_var + " is not set");
    cfg.base_url = url;
    if (const char* tok = std::getenv(kAuthTokenEnv)) cfg.auth_token = tok;
    return cfg;
}

JsonHttpClient::JsonHttpClient(RemoteConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ConfigError("remote backend URL is empty");
    if (config_.max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
}

nlohmann::json JsonHttpClient::post(const std::string& path, const nlohmann::json& body) const {
    return request("POST", path, &body);
}

nlohmann::json JsonHttpClient::get(const std::string& path) const { return request("GET", path, nullptr); }

nlohmann::json JsonHttpClient::request(const std::string& method, const std::string& path,
                                       const nlohmann::json* body) const {
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        if (attempt > 1) std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 2)));

        httplib::Client cli(config_.base_url);
        cli.set_connection_timeout(config_.timeout);
        cli.set_read_timeout(config_.timeout);
        httplib::Headers headers;
        if (!config_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + config_.auth_token);

        auto res = body ? cli.Post(path, headers, body->dump(), "application/json") : cli.Get(path, headers);
        if (!res) {
            last_error = method + " " + path + ": " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = method + " " + path + ": HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status >= 400) {
            throw Error(method + " " + path + " rejected with HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(method + " " + path + " returned invalid JSON: " + e.what());
        }
    }
    throw TransportError(last_error, config_.max_attempts);
}

RemotePolicyBackend::RemotePolicyBackend(RemoteConfig config) : client_(std::move(config)) {
    caps_.raw = client_.get("/capabilities");
    caps_.teacher_forcing = caps_.raw.value("teacher_forcing", false);
    caps_.tokenizer = caps_.raw.value("tokenizer", false);
    caps_.distribution = caps_.raw.value("distribution", false);
    if (caps_.raw.contains("eos_token") && caps_.raw["eos_token"].is_number_integer()) {
        caps_.eos_token = caps_.raw["eos_token"].get<TokenId>();
    }
    caps_.eos_text = caps_.raw.value("eos_text", std::string("</s>"));
    if (caps_.raw.contains("vocab_size") && caps_.raw["vocab_size"].is_number_integer()) {
        caps_.vocab_size = caps_.raw["vocab_size"].get<int>();
    }
    spdlog::info("policy backend probe {}: {}", client_.config().base_url, caps_.raw.dump());
    if (!caps_.teacher_forcing) {
        throw CapabilityError("policy server at " + client_.config().base_url +
                              " cannot score fixed sequences (teacher_forcing=false)");
    }
    if (!caps_.tokenizer) intern(caps_.eos_text);  // eos is chunk id 0
}

TokenId RemotePolicyBackend::intern(const std::string& text) const {
    std::lock_guard lock(vocab_mu_);
    auto [it, inserted] = chunk_ids_.try_emplace(text, static_cast<TokenId>(chunks_.size()));
    if (inserted) chunks_.push_back(text);
    return it->second;
}

std::string RemotePolicyBackend::chunk(TokenId id) const {
    std::lock_guard lock(vocab_mu_);
    if (id < 0 || static_cast<std::size_t>(id) >= chunks_.size()) {
        throw ConfigError("token " + std::to_string(id) + " is not a known text chunk");
    }
    return chunks_[static_cast<std::size_t>(id)];
}

void RemotePolicyBackend::check_vocab(std::span<const TokenId> tokens) const {
    if (!caps_.tokenizer) {
        for (TokenId t : tokens) (void)chunk(t);
        return;
    }
    if (!caps_.vocab_size) return;
    for (TokenId t : tokens) {
        if (t < 0 || t >= *caps_.vocab_size) {
            throw ConfigError("token " + std::to_string(t) + " outside server vocabulary of size " +
                              std::to_string(*caps_.vocab_size));
        }
    }
}

nlohmann::json RemotePolicyBackend::prompt_field(std::span<const TokenId> tokens) const {
    if (caps_.tokenizer) return nlohmann::json(std::vector<TokenId>(tokens.begin(), tokens.end()));
    return nlohmann::json(detokenize(tokens));
}

std::optional<TokenId> RemotePolicyBackend::eos_id() const {
    if (caps_.tokenizer) return caps_.eos_token;
    return TokenId{0};
}

Continuation RemotePolicyBackend::continue_sequence(const TokenSeq& prefix, const SamplingParams& params) const {
    params.validate();
    if (prefix.size() == 0) throw ConfigError("continue_sequence needs a non-empty prefix");
    check_vocab(prefix.tokens());
    Continuation out;
    if (prefix.terminated()) {
        out.terminated = true;
        return out;
    }
    nlohmann::json req = {{"max_new_tokens", params.max_new_tokens},
                          {"temperature", params.temperature},
                          {"top_p", params.top_p},
                          {"seed", params.seed_stream}};
    req[caps_.tokenizer ? "prompt_tokens" : "prompt"] = prompt_field(prefix.tokens());
    const auto res = client_.post("/complete", req);

    if (caps_.tokenizer) {
        out.segment = res.at("tokens").get<std::vector<TokenId>>();
    } else {
        for (const auto& c : res.at("chunks")) out.segment.push_back(intern(c.get<std::string>()));
    }
    out.logprobs = res.value("logprobs", std::vector<double>{});
    if (out.logprobs.size() != out.segment.size()) out.logprobs.assign(out.segment.size(), 0.0);
    if (out.segment.size() > static_cast<std::size_t>(params.max_new_tokens)) {
        out.segment.resize(static_cast<std::size_t>(params.max_new_tokens));
        out.logprobs.resize(out.segment.size());
    }
    const auto eos = eos_id();
    const bool ended_on_eos = eos && !out.segment.empty() && out.segment.back() == *eos;
    out.terminated = ended_on_eos || res.value("finished", false);
    if (out.terminated && !ended_on_eos && eos) {
        // Server stopped on eos without echoing it.
        out.segment.push_back(*eos);
        out.logprobs.push_back(0.0);
    }
    return out;
}

ScoredLogprobs RemotePolicyBackend::score_sequence(const TokenSeq& seq, ModelTag tag) const {
    if (seq.response_len() == 0) throw ConfigError("score_sequence needs at least one response token");
    check_vocab(seq.tokens());
    nlohmann::json req = {{"model", std::string(to_string(tag))}};
    if (caps_.tokenizer) {
        req["prompt_tokens"] = prompt_field(seq.prompt());
        req["response_tokens"] = std::vector<TokenId>(seq.response().begin(), seq.response().end());
    } else {
        req["prompt"] = prompt_field(seq.prompt());
        std::vector<std::string> chunks;
        for (TokenId t : seq.response()) chunks.push_back(chunk(t));
        req["response_chunks"] = chunks;
    }
    const auto res = client_.post("/score", req);
    ScoredLogprobs out;
    out.model_tag = tag;
    out.token_ids.assign(seq.response().begin(), seq.response().end());
    out.logprobs = res.at("logprobs").get<std::vector<double>>();
    if (out.logprobs.size() != out.token_ids.size()) {
        throw Error("score endpoint returned " + std::to_string(out.logprobs.size()) + " logprobs for " +
                    std::to_string(out.token_ids.size()) + " tokens");
    }
    return out;
}

std::vector<double> RemotePolicyBackend::next_token_distribution(const TokenSeq& prefix) const {
    if (!caps_.distribution) return PolicyBackend::next_token_distribution(prefix);
    nlohmann::json req;
    req[caps_.tokenizer ? "prompt_tokens" : "prompt"] = prompt_field(prefix.tokens());
    const auto res = client_.post("/distribution", req);
    // Top-k only: the tail mass is dropped and the slice renormalized, which
    // biases entropy downward.
    std::vector<double> probs;
    double mass = 0.0;
    for (const auto& e : res.at("top_logprobs")) {
        const TokenId id = caps_.tokenizer ? e.at("token").get<TokenId>() : intern(e.at("chunk").get<std::string>());
        if (id < 0) continue;
        if (static_cast<std::size_t>(id) >= probs.size()) probs.resize(static_cast<std::size_t>(id) + 1, 0.0);
        const double p = std::exp(e.at("logprob").get<double>());
        probs[static_cast<std::size_t>(id)] += p;
        mass += p;
    }
    if (mass > 0.0) {
        for (double& p : probs) p /= mass;
    }
    return probs;
}

std::vector<TokenId> RemotePolicyBackend::tokenize(std::string_view text) const {
    if (caps_.tokenizer) {
        return client_.post("/tokenize", {{"text", std::string(text)}}).at("tokens").get<std::vector<TokenId>>();
    }
    std::vector<TokenId> out;
    std::istringstream in{std::string(text)};
    std::string word;
    while (in >> word) out.push_back(intern(word));
    return out;
}

std::string RemotePolicyBackend::detokenize(std::span<const TokenId> tokens) const {
    if (caps_.tokenizer) {
        return client_.post("/detokenize", {{"tokens", std::vector<TokenId>(tokens.begin(), tokens.end())}})
            .at("text")
            .get<std::string>();
    }
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += chunk(tokens[i]);
    }
    return out;
}

std::string RemotePolicyBackend::describe() const {
    return "remote(" + client_.config().base_url + (caps_.tokenizer ? ", ids)" : ", text)");
}

HttpRewardModel::HttpRewardModel(RemoteConfig config) : client_(std::move(config)) {}

double HttpRewardModel::reward(std::string_view prompt, std::string_view response) const {
    const auto res = client_.post("/reward", {{"prompt", std::string(prompt)}, {"response", std::string(response)}});
    if (res.contains("score")) return res["score"].get<double>();
    if (res.contains("step_scores")) return prm_aggregate(res["step_scores"].get<std::vector<double>>());
    throw Error("reward endpoint returned neither score nor step_scores");
}

std::vector<double> HttpRewardModel::step_rewards(std::string_view prompt, std::string_view response) const {
    const auto res = client_.post(
        "/reward", {{"prompt", std::string(prompt)}, {"response", std::string(response)}, {"mode", "prm"}});
    if (!res.contains("step_scores")) throw CapabilityError("reward server returned no step_scores in prm mode");
    return res["step_scores"].get<std::vector<double>>();
}

std::string HttpRewardModel::describe() const { return "http-reward(" + client_.config().base_url + ")"; }

}  // namespace treebon
