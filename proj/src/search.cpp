// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

#include <spdlog/spdlog.h>

#include "treebon/error.hpp"
#include "treebon/kernels.hpp"
#include "treebon/parallel.hpp"

namespace treebon {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

std::string_view to_string(FinalScorerKind k) noexcept {
    return k == FinalScorerKind::same_as_partial ? "same_as_partial" : "external";
}

FinalScorerKind parse_final_scorer(std::string_view name) {
    if (name == "same_as_partial") return FinalScorerKind::same_as_partial;
    if (name == "external") return FinalScorerKind::external;
    throw ConfigError("unknown final scorer '" + std::string(name) + "'");
}

void SearchConfig::validate() const {
    if (N < 1) throw ConfigError("N must be at least 1");
    if (l_max < 1) throw ConfigError("l_max must be at least 1");
    variant.validate();
    SamplingParams probe = sampling;
    probe.max_new_tokens = 1;
    probe.validate();
    switch (method) {
        case Method::bon: break;
        case Method::treebon:
            if (N_layer < 1 || N_layer > l_max) {
                throw ConfigError("need 1 <= N_layer <= l_max, got N_layer=" + std::to_string(N_layer) +
                                  ", l_max=" + std::to_string(l_max));
            }
            if (N_children < 1) throw ConfigError("N_children must be at least 1");
            if (N % N_children != 0) {
                throw ConfigError("N_children=" + std::to_string(N_children) + " must divide N=" + std::to_string(N));
            }
            break;
        case Method::sbon:
            if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
            if (l_max < 2) throw ConfigError("sbon needs l_max >= 2");
            break;
        case Method::beam:
            if (beam_width < 1) throw ConfigError("beam_width must be at least 1");
            if (N_children < 1) throw ConfigError("N_children must be at least 1");
            if (N_layer < 1 || N_layer > l_max) throw ConfigError("need 1 <= N_layer <= l_max");
            break;
    }
}

void to_json(nlohmann::json& j, const SearchConfig& c) {
    j = {{"method", to_string(c.method)},
         {"N", c.N},
         {"l_max", c.l_max},
         {"N_children", c.N_children},
         {"N_layer", c.N_layer},
         {"variant", c.variant},
         {"final_scorer", to_string(c.final_scorer)},
         {"alpha", c.alpha},
         {"beam_width", c.beam_width},
         {"temperature", c.sampling.temperature},
         {"top_p", c.sampling.top_p},
         {"seed", c.seed},
         {"exclude_terminated", c.exclude_terminated},
         {"flops_per_token", c.cost.flops_per_token},
         {"scorer_passes", c.cost.scorer_passes}};
}

void from_json(const nlohmann::json& j, SearchConfig& c) {
    c.method = parse_method(j.at("method").get<std::string>());
    c.N = j.at("N").get<int>();
    c.l_max = j.at("l_max").get<int>();
    c.N_children = j.at("N_children").get<int>();
    c.N_layer = j.at("N_layer").get<int>();
    c.variant = j.at("variant").get<PartialRewardVariant>();
    c.final_scorer = parse_final_scorer(j.at("final_scorer").get<std::string>());
    c.alpha = j.at("alpha").get<double>();
    c.beam_width = j.at("beam_width").get<int>();
    c.sampling.temperature = j.at("temperature").get<double>();
    c.sampling.top_p = j.at("top_p").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.exclude_terminated = j.value("exclude_terminated", false);
    c.cost.flops_per_token = j.value("flops_per_token", kDefaultFlopsPerToken);
    c.cost.scorer_passes = j.value("scorer_passes", kDefaultScorerPasses);
}

std::vector<int> split_budget(int l_max, int N_layer) {
    if (N_layer < 1 || N_layer > l_max) {
        throw ConfigError("cannot split l_max=" + std::to_string(l_max) + " into " + std::to_string(N_layer) +
                          " layers");
    }
    std::vector<int> out(static_cast<std::size_t>(N_layer), l_max / N_layer);
    out.back() += l_max % N_layer;
    return out;
}

std::vector<NodeId> select_top(std::span<const ScoredNode> candidates, std::size_t keep) {
    if (keep > candidates.size()) {
        throw Error("select_top: keep=" + std::to_string(keep) + " exceeds " + std::to_string(candidates.size()) +
                    " candidates");
    }
    std::vector<ScoredNode> sorted(candidates.begin(), candidates.end());
    const auto cmp = [](const ScoredNode& a, const ScoredNode& b) {
        if (a.score != b.score) return a.score > b.score;
        return to_index(a.id) < to_index(b.id);
    };
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep), sorted.end(), cmp);
    std::vector<NodeId> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(sorted[i].id);
    return out;
}

namespace {

// Shared machinery: node creation, layer generation, scoring, final argmax.
class SearchRun {
public:
    SearchRun(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends)
        : config_(config),
          backends_(backends),
          start_(std::chrono::steady_clock::now()),
          partial_(backends.scorer_model, config.variant) {
        config_.validate();
        result_.tree = NodeStore(std::vector<TokenId>(prompt.begin(), prompt.end()));
        result_.ledger.prompt_tokens = static_cast<std::int64_t>(prompt.size());
        result_.ledger.flops_per_token = config.cost.flops_per_token;
        result_.ledger.scorer_passes = config.cost.scorer_passes;
        if (config.final_scorer == FinalScorerKind::external) {
            if (backends.external == nullptr) throw ConfigError("final_scorer=external but no external scorer given");
            final_ = backends.external;
        } else {
            final_ = &partial_;
        }
    }

    NodeStore& tree() { return result_.tree; }
    const CandidateScorer& partial() const { return partial_; }
    const CandidateScorer& final_scorer() const { return *final_; }

    TokenSeq prefix_of(std::optional<NodeId> parent) const {
        if (parent) return result_.tree.materialize(*parent);
        const auto p = result_.tree.prompt();
        return TokenSeq(std::vector<TokenId>(p.begin(), p.end()), p.size());
    }

    // Fills the segments of freshly created nodes. Children of terminated
    // parents become empty carry-forwards. Returns tokens generated.
    std::int64_t generate(std::span<const NodeId> ids, int budget) {
        seg_logprob_.resize(result_.tree.size(), 0.0);
        parallel_for(ids.size(), backends_.workers, [&](std::size_t i) {
            TreeNode& node = result_.tree.at(ids[i]);
            if (node.parent) {
                const TreeNode& parent = result_.tree.at(*node.parent);
                if (parent.terminated) {
                    node.terminated = true;
                    node.failed = parent.failed;
                    return;
                }
            }
            SamplingParams params = config_.sampling;
            params.max_new_tokens = budget;
            params.seed_stream = stream_seed(config_.seed, to_index(node.id));
            try {
                auto cont = backends_.generator.continue_sequence(prefix_of(node.parent), params);
                double lp = 0.0;
                for (double x : cont.logprobs) lp += x;
                seg_logprob_[to_index(node.id)] = lp;
                node.segment = std::move(cont.segment);
                node.terminated = cont.terminated;
            } catch (const TransportError& e) {
                spdlog::warn("generation for node {} failed: {}", to_index(node.id), e.what());
                node.failed = true;
                node.terminated = true;
            }
        });
        std::int64_t tokens = 0;
        for (NodeId id : ids) tokens += static_cast<std::int64_t>(result_.tree.at(id).segment.size());
        return tokens;
    }

    void score(std::span<const NodeId> ids, const CandidateScorer& scorer) {
        parallel_for(ids.size(), backends_.workers, [&](std::size_t i) {
            TreeNode& node = result_.tree.at(ids[i]);
            if (node.failed) {
                node.score = kNegInf;
                return;
            }
            try {
                node.score = scorer.score(result_.tree.materialize(node.id));
            } catch (const TransportError& e) {
                spdlog::warn("scoring node {} failed: {}", to_index(node.id), e.what());
                node.failed = true;
                node.terminated = true;
                node.score = kNegInf;
            }
        });
    }

    double rank_key(NodeId id) const {
        const TreeNode& n = result_.tree.at(id);
        if (config_.exclude_terminated && n.terminated) return kNegInf;
        return n.score.value_or(kNegInf);
    }

    std::vector<ScoredNode> ranked(std::span<const NodeId> ids) const {
        std::vector<ScoredNode> out;
        out.reserve(ids.size());
        for (NodeId id : ids) out.push_back({id, rank_key(id)});
        return out;
    }

    double cumulative_logprob(NodeId id) const {
        double lp = 0.0;
        for (NodeId a : result_.tree.ancestry(id)) lp += seg_logprob_[to_index(a)];
        return lp;
    }

    // Picks the best of the final candidate set (ids ascending, so the first
    // maximum is the lowest id) and seals the result.
    SearchResult finish(std::vector<NodeId> final_ids, double nominal_tokens, double nominal_flops) {
        std::vector<double> keys;
        keys.reserve(final_ids.size());
        for (NodeId id : final_ids) keys.push_back(rank_key(id));
        const NodeId best = final_ids[kernels::argmax(keys)];

        LayerState last;
        last.layer = result_.tree.at(final_ids.front()).layer;
        last.candidates = std::move(final_ids);
        last.selected = {best};
        result_.per_layer.push_back(std::move(last));

        result_.best_node = best;
        result_.best = result_.tree.materialize(best);
        result_.best_score = *result_.tree.at(best).score;
        result_.ledger.nominal_tokens = nominal_tokens;
        result_.ledger.nominal_flops = nominal_flops;
        result_.ledger.seal();
        result_.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return std::move(result_);
    }

    void push_layer(LayerState layer) { result_.per_layer.push_back(std::move(layer)); }
    FlopsLedger& ledger() { return result_.ledger; }
    const SearchConfig& config() const { return config_; }

    double nominal_flops_for(double tokens) const {
        return config_.cost.scorer_passes * (static_cast<double>(result_.ledger.prompt_tokens) *
                                                 config_.cost.flops_per_token +
                                             tokens * config_.cost.flops_per_token);
    }

private:
    SearchConfig config_;
    const SearchBackends& backends_;
    std::chrono::steady_clock::time_point start_;
    ImplicitRewardScorer partial_;
    const CandidateScorer* final_ = nullptr;
    SearchResult result_;
    // Sum of generator logprobs of each node's own segment.
    std::vector<double> seg_logprob_;
};

std::vector<NodeId> add_roots(NodeStore& tree, int count) {
    std::vector<NodeId> ids;
    ids.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) ids.push_back(tree.add_root());
    return ids;
}

void require_method(const SearchConfig& config, Method m) {
    if (config.method != m) {
        throw ConfigError("config method is " + std::string(to_string(config.method)) + ", expected " +
                          std::string(to_string(m)));
    }
}

}  // namespace

SearchResult run_bon(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends) {
    require_method(config, Method::bon);
    SearchRun run(config, prompt, backends);
    auto ids = add_roots(run.tree(), config.N);
    run.ledger().add_phase("layer1", run.generate(ids, config.l_max));
    run.score(ids, run.final_scorer());
    const double nominal = static_cast<double>(config.l_max) * config.N;
    return run.finish(std::move(ids), nominal,
                      total_flops(Method::bon, config.N, config.l_max, 1, 1, static_cast<std::int64_t>(prompt.size()),
                                  config.cost.flops_per_token, config.cost.scorer_passes));
}

SearchResult run_treebon(const SearchConfig& config, std::span<const TokenId> prompt,
                         const SearchBackends& backends) {
    require_method(config, Method::treebon);
    SearchRun run(config, prompt, backends);
    const auto budgets = split_budget(config.l_max, config.N_layer);
    const std::size_t keep = static_cast<std::size_t>(config.N / config.N_children);

    auto candidates = add_roots(run.tree(), config.N);
    run.ledger().add_phase("layer1", run.generate(candidates, budgets[0]));

    for (int layer = 1; layer < config.N_layer; ++layer) {
        run.score(candidates, run.partial());
        const auto scored = run.ranked(candidates);
        auto survivors = select_top(scored, std::min(keep, candidates.size()));

        // N child slots per layer. A terminated survivor takes one slot (its
        // carry-forward); the freed slots go round-robin, in rank order, to the
        // unterminated survivors. If none is left, every survivor keeps its
        // N_children slots as empty carry-forwards.
        std::size_t live = 0;
        for (NodeId id : survivors) live += !run.tree().at(id).terminated;
        const std::size_t dead = survivors.size() - live;
        const std::size_t slots = static_cast<std::size_t>(config.N) - dead;

        std::vector<NodeId> next;
        next.reserve(static_cast<std::size_t>(config.N));
        std::size_t live_rank = 0;
        for (NodeId parent : survivors) {
            if (run.tree().at(parent).terminated) {
                const int copies = live == 0 ? config.N_children : 1;
                for (int c = 0; c < copies; ++c) next.push_back(run.tree().add_child(parent));
                continue;
            }
            const std::size_t children = slots / live + (live_rank < slots % live ? 1 : 0);
            ++live_rank;
            for (std::size_t c = 0; c < children; ++c) next.push_back(run.tree().add_child(parent));
        }

        run.push_layer(LayerState{layer, std::move(candidates), std::move(survivors)});
        run.ledger().add_phase("layer" + std::to_string(layer + 1),
                               run.generate(next, budgets[static_cast<std::size_t>(layer)]));
        candidates = std::move(next);
    }

    run.score(candidates, run.final_scorer());
    return run.finish(std::move(candidates), static_cast<double>(config.l_max) * config.N,
                      total_flops(Method::treebon, config.N, config.l_max, config.N_layer, config.N_children,
                                  static_cast<std::int64_t>(prompt.size()), config.cost.flops_per_token,
                                  config.cost.scorer_passes));
}

SearchResult run_sbon(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends) {
    require_method(config, Method::sbon);
    SearchRun run(config, prompt, backends);
    const int first = config.l_max / 2;
    const int second = config.l_max - first;

    auto partials = add_roots(run.tree(), config.N);
    run.ledger().add_phase("prefix", run.generate(partials, first));
    run.score(partials, run.partial());

    const auto rejected = static_cast<std::size_t>(std::floor(config.alpha * config.N + 1e-9));
    const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(config.N) - rejected);
    auto survivors = select_top(run.ranked(partials), keep);

    std::vector<NodeId> completed;
    completed.reserve(survivors.size());
    for (NodeId parent : survivors) completed.push_back(run.tree().add_child(parent));
    run.push_layer(LayerState{1, std::move(partials), std::move(survivors)});
    run.ledger().add_phase("completion", run.generate(completed, second));
    run.score(completed, run.final_scorer());

    const double nominal = sbon_nominal_tokens(config.N, config.l_max, config.alpha);
    return run.finish(std::move(completed), nominal, run.nominal_flops_for(nominal));
}

SearchResult run_beam(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends) {
    require_method(config, Method::beam);
    SearchRun run(config, prompt, backends);
    const auto budgets = split_budget(config.l_max, config.N_layer);
    const auto width = static_cast<std::size_t>(config.beam_width);
    const auto fanout = static_cast<std::size_t>(config.N_children);

    // The prompt acts as `width` identical beam members.
    auto candidates = add_roots(run.tree(), config.beam_width * config.N_children);
    run.ledger().add_phase("layer1", run.generate(candidates, budgets[0]));

    const auto score_by_logprob = [&](std::span<const NodeId> ids) {
        for (NodeId id : ids) {
            TreeNode& node = run.tree().at(id);
            node.score = node.failed ? kNegInf : run.cumulative_logprob(id);
        }
    };

    for (int layer = 1; layer < config.N_layer; ++layer) {
        score_by_logprob(candidates);
        auto beam = select_top(run.ranked(candidates), std::min(width, candidates.size()));
        std::vector<NodeId> next;
        next.reserve(beam.size() * fanout);
        for (NodeId parent : beam) {
            const std::size_t children = run.tree().at(parent).terminated ? 1 : fanout;
            for (std::size_t c = 0; c < children; ++c) next.push_back(run.tree().add_child(parent));
        }
        run.push_layer(LayerState{layer, std::move(candidates), std::move(beam)});
        run.ledger().add_phase("layer" + std::to_string(layer + 1),
                               run.generate(next, budgets[static_cast<std::size_t>(layer)]));
        candidates = std::move(next);
    }
    score_by_logprob(candidates);

    const double nominal = static_cast<double>(config.beam_width) * config.N_children * config.l_max;
    return run.finish(std::move(candidates), nominal, run.nominal_flops_for(nominal));
}

SearchResult run_search(const SearchConfig& config, std::span<const TokenId> prompt, const SearchBackends& backends) {
    switch (config.method) {
        case Method::bon: return run_bon(config, prompt, backends);
        case Method::treebon: return run_treebon(config, prompt, backends);
        case Method::sbon: return run_sbon(config, prompt, backends);
        case Method::beam: return run_beam(config, prompt, backends);
    }
    throw ConfigError("unknown method");
}

}  // namespace treebon
