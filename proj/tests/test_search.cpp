// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "treebon/error.hpp"
#include "treebon/search.hpp"
#include "treebon/toy_model.hpp"

using namespace treebon;

namespace {

SearchConfig cfg(Method m, int N, int l_max, int layers = 1, int children = 1) {
    SearchConfig c;
    c.method = m;
    c.N = N;
    c.l_max = l_max;
    c.N_layer = layers;
    c.N_children = children;
    c.seed = 99;
    return c;
}

const std::vector<TokenId> kPrompt{1, 2};

std::vector<double> scores_of(const SearchResult& r, std::span<const NodeId> ids) {
    std::vector<double> out;
    for (NodeId id : ids) out.push_back(*r.tree.at(id).score);
    return out;
}

}  // namespace

TEST_CASE("split_budget") {
    CHECK(split_budget(384, 4) == std::vector<int>{96, 96, 96, 96});
    CHECK(split_budget(192, 3) == std::vector<int>{64, 64, 64});
    CHECK(split_budget(190, 4) == std::vector<int>{47, 47, 47, 49});
    CHECK(split_budget(5, 5) == std::vector<int>{1, 1, 1, 1, 1});
    CHECK_THROWS_AS(split_budget(3, 4), ConfigError);
    CHECK_THROWS_AS(split_budget(3, 0), ConfigError);
}

TEST_CASE("select_top ordering and ties") {
    const std::vector<ScoredNode> a{{NodeId{0}, 3}, {NodeId{1}, 1}, {NodeId{2}, 2}, {NodeId{3}, 5}};
    CHECK(select_top(a, 2) == std::vector<NodeId>{NodeId{3}, NodeId{0}});
    const std::vector<ScoredNode> b{{NodeId{0}, 2}, {NodeId{1}, 2}, {NodeId{2}, 1}, {NodeId{3}, 0}};
    CHECK(select_top(b, 2) == std::vector<NodeId>{NodeId{0}, NodeId{1}});
    CHECK_THROWS(select_top(b, 5));
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(cfg(Method::treebon, 10, 20, 2, 4).validate(), ConfigError);
    CHECK_THROWS_AS(cfg(Method::treebon, 8, 3, 4, 4).validate(), ConfigError);
    CHECK_THROWS_AS(cfg(Method::bon, 0, 3).validate(), ConfigError);
    auto s = cfg(Method::sbon, 8, 10);
    s.alpha = 1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_NOTHROW(cfg(Method::treebon, 128, 384, 4, 4).validate());

    const auto task = make_tilted_task({});
    auto wrong = cfg(Method::bon, 4, 4);
    CHECK_THROWS_AS(run_treebon(wrong, kPrompt, {task, task}), ConfigError);
    wrong.final_scorer = FinalScorerKind::external;
    CHECK_THROWS_AS(run_bon(wrong, kPrompt, {task, task}), ConfigError);
}

TEST_CASE("config json round trip") {
    auto c = cfg(Method::treebon, 16, 40, 4, 4);
    c.variant = {RewardKind::weighted_exp_decay, 0.5, 0.9};
    c.final_scorer = FinalScorerKind::external;
    c.sampling.top_p = 0.9;
    c.seed = 0xfffffffffffffff1ULL;
    const nlohmann::json j = c;
    const auto back = j.get<SearchConfig>();
    CHECK(nlohmann::json(back) == j);
}

TEST_CASE("bon with N=1 returns the only sample") {
    const auto task = make_tilted_task({});
    const auto r = run_bon(cfg(Method::bon, 1, 8), kPrompt, {task, task});
    CHECK(r.best_node == NodeId{0});
    CHECK(r.best.response_len() == 8);
}

TEST_CASE("bon picks the maximum external score") {
    const auto task = make_tilted_task({});
    const TargetCountScorer count(3);
    auto c = cfg(Method::bon, 64, 16);
    c.final_scorer = FinalScorerKind::external;
    const auto r = run_bon(c, kPrompt, {task, task, &count});
    double top = -1;
    for (const auto& n : r.tree.nodes()) top = std::max(top, count.score(r.tree.materialize(n.id)));
    CHECK(r.best_score == top);
    CHECK(count.score(r.best) == top);
    REQUIRE(r.per_layer.size() == 1);
    CHECK(r.per_layer[0].candidates.size() == 64);
}

TEST_CASE("bon ledger at reference scale") {
    const auto task = make_tilted_task({});
    const auto r = run_bon(cfg(Method::bon, 128, 192), kPrompt, {task, task});
    CHECK(r.ledger.generated_total() == 24576);
    CHECK(r.ledger.nominal_tokens == 24576.0);
}

TEST_CASE("treebon with one layer matches bon") {
    const auto task = make_tilted_task({});
    const auto b = run_bon(cfg(Method::bon, 16, 12), kPrompt, {task, task});
    const auto t = run_treebon(cfg(Method::treebon, 16, 12, 1, 4), kPrompt, {task, task});
    REQUIRE(b.tree.size() == t.tree.size());
    for (std::size_t i = 0; i < b.tree.size(); ++i) {
        CHECK(b.tree.nodes()[i].segment == t.tree.nodes()[i].segment);
    }
    CHECK(b.best == t.best);
}

TEST_CASE("treebon tree structure") {
    const auto task = make_tilted_task({});
    const auto r = run_treebon(cfg(Method::treebon, 8, 12, 3, 4), kPrompt, {task, task});
    REQUIRE(r.per_layer.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.per_layer[i].candidates.size() == 8);
    CHECK(r.per_layer[0].selected.size() == 2);
    CHECK(r.per_layer[1].selected.size() == 2);
    CHECK(r.per_layer[2].selected.size() == 1);

    std::map<std::uint32_t, int> arity;
    for (const auto& n : r.tree.nodes()) {
        if (n.parent) ++arity[to_index(*n.parent)];
        CHECK((n.layer == 1) == !n.parent.has_value());
        CHECK(n.segment.size() == 4);
    }
    for (std::size_t layer = 0; layer < 2; ++layer) {
        for (NodeId s : r.per_layer[layer].selected) CHECK(arity[to_index(s)] == 4);
    }
    CHECK(r.tree.size() == 24);
    CHECK(r.ledger.generated_total() == 8 * 12);
}

TEST_CASE("reference-scale treebon budgets") {
    const auto task = make_tilted_task({});
    const auto r = run_treebon(cfg(Method::treebon, 128, 384, 4, 4), kPrompt, {task, task, nullptr, 1});
    REQUIRE(r.per_layer.size() == 4);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.per_layer[i].selected.size() == 32);
    for (const auto& [phase, tokens] : r.ledger.generated_tokens) CHECK(tokens == 96 * 128);
    CHECK(r.best.response_len() == 384);
}

TEST_CASE("survivors dominate pruned candidates") {
    const auto task = make_tilted_task({});
    const auto r = run_treebon(cfg(Method::treebon, 16, 20, 4, 2), kPrompt, {task, task});
    for (std::size_t i = 0; i + 1 < r.per_layer.size(); ++i) {
        const auto& L = r.per_layer[i];
        const std::set<NodeId> sel(L.selected.begin(), L.selected.end());
        double worst_kept = INFINITY, best_pruned = -INFINITY;
        for (NodeId id : L.candidates) {
            const double s = *r.tree.at(id).score;
            if (sel.contains(id)) {
                worst_kept = std::min(worst_kept, s);
            } else {
                best_pruned = std::max(best_pruned, s);
            }
        }
        CHECK(worst_kept >= best_pruned);
    }
    // best is a final candidate and carries the maximum final score.
    const auto finals = scores_of(r, r.per_layer.back().candidates);
    CHECK(r.best_score == *std::max_element(finals.begin(), finals.end()));
}

TEST_CASE("early termination keeps the candidate set full") {
    ToyTaskSpec spec;
    spec.eos_prob = 0.15;
    const auto task = make_tilted_task(spec);
    bool saw_carry = false;
    int all_dead_layers = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto c = cfg(Method::treebon, 16, 24, 4, 4);
        c.seed = seed;
        const auto r = run_treebon(c, kPrompt, {task, task});
        for (std::size_t i = 0; i + 1 < r.per_layer.size(); ++i) {
            CHECK(r.per_layer[i].candidates.size() == 16);
            CHECK(r.per_layer[i].selected.size() == 4);
        }
        CHECK(r.per_layer.back().candidates.size() == 16);
        CHECK(r.ledger.generated_total() <= 16 * 24);
        for (const auto& n : r.tree.nodes()) {
            if (!n.parent || !r.tree.at(*n.parent).terminated) continue;
            saw_carry = true;
            CHECK(n.segment.empty());
            CHECK(n.terminated);
        }
        // A terminated survivor has one child unless its whole layer of survivors terminated.
        for (std::size_t i = 0; i + 1 < r.per_layer.size(); ++i) {
            const auto& sel = r.per_layer[i].selected;
            const bool all_done =
                std::all_of(sel.begin(), sel.end(), [&](NodeId id) { return r.tree.at(id).terminated; });
            all_dead_layers += all_done;
            for (NodeId id : sel) {
                int kids = 0;
                for (const auto& m : r.tree.nodes()) kids += m.parent == id;
                if (!r.tree.at(id).terminated) {
                    CHECK(kids >= 4);
                } else {
                    CHECK(kids == (all_done ? 4 : 1));
                }
            }
        }
    }
    CHECK(saw_carry);
    MESSAGE("layers where every survivor had terminated: " << all_dead_layers);
}

TEST_CASE("exclude_terminated ranks finished candidates last") {
    ToyTaskSpec spec;
    spec.eos_prob = 0.2;
    const auto task = make_tilted_task(spec);
    auto c = cfg(Method::bon, 32, 12);
    c.exclude_terminated = true;
    const auto r = run_bon(c, kPrompt, {task, task});
    bool any_open = false;
    for (const auto& n : r.tree.nodes()) any_open |= !n.terminated;
    if (any_open) CHECK_FALSE(r.best.terminated());
}

TEST_CASE("sbon rejection and token accounting") {
    const auto task = make_tilted_task({});
    auto c = cfg(Method::sbon, 19, 192);
    c.alpha = 0.3;
    const auto r = run_sbon(c, kPrompt, {task, task});
    CHECK(r.ledger.nominal_tokens == doctest::Approx(3100.8).epsilon(1e-12));
    CHECK(r.ledger.generated_total() == 19 * 96 + (19 - 5) * 96);
    CHECK(r.per_layer[0].selected.size() == 14);

    c.alpha = 0.0;
    const auto z = run_sbon(c, kPrompt, {task, task});
    CHECK(z.ledger.generated_total() == 19 * 192);
    CHECK(z.ledger.nominal_tokens == 19.0 * 192);
}

TEST_CASE("beam with width 1 and one child is plain sampling") {
    const auto task = make_tilted_task({});
    auto c = cfg(Method::beam, 1, 12, 3, 1);
    c.beam_width = 1;
    const auto r = run_beam(c, kPrompt, {task, task});
    CHECK(r.tree.size() == 3);
    CHECK(r.best.response_len() == 12);
}

TEST_CASE("beam on a deterministic table is greedy") {
    std::vector<double> probs(16, 0.0);
    for (int r = 0; r < 4; ++r) probs[r * 4 + (r + 1) % 4] = 1.0;
    const ToyBackend det(ToyModelTable(4, 1, probs, std::nullopt));
    auto c = cfg(Method::beam, 1, 6, 3, 2);
    c.beam_width = 3;
    const auto r = run_beam(c, kPrompt, {det, det});
    CHECK(std::vector<TokenId>(r.best.response().begin(), r.best.response().end()) ==
          std::vector<TokenId>{3, 0, 1, 2, 3, 0});
}

TEST_CASE("beam selection matches teacher-forced log-probability ranking") {
    // Oracle: rank every candidate by the generator's teacher-forced logprob of
    // its whole response and compare with the search's choices.
    const auto task = make_tilted_task({.vocab_size = 3, .target = 1});
    auto c = cfg(Method::beam, 1, 4, 2, 2);
    c.beam_width = 4;
    const auto r = run_beam(c, kPrompt, {task, task});
    const auto oracle = [&](NodeId id) {
        double s = 0.0;
        for (double x : task.score_sequence(r.tree.materialize(id), ModelTag::reference).logprobs) s += x;
        return s;
    };
    REQUIRE(r.per_layer.size() == 2);
    CHECK(r.per_layer[0].candidates.size() == 8);
    std::vector<std::pair<double, std::uint32_t>> ranked;
    for (NodeId id : r.per_layer[0].candidates) ranked.push_back({-oracle(id), to_index(id)});
    std::sort(ranked.begin(), ranked.end());
    for (std::size_t i = 0; i < 4; ++i) CHECK(to_index(r.per_layer[0].selected[i]) == ranked[i].second);

    double best = -INFINITY;
    for (NodeId id : r.per_layer[1].candidates) best = std::max(best, oracle(id));
    CHECK(oracle(r.best_node) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("results do not depend on worker count") {
    ToyTaskSpec spec;
    spec.eos_prob = 0.05;
    const auto task = make_tilted_task(spec);
    const auto c = cfg(Method::treebon, 32, 24, 4, 4);
    const auto a = run_treebon(c, kPrompt, {task, task, nullptr, 1});
    const auto b = run_treebon(c, kPrompt, {task, task, nullptr, 8});
    CHECK(a.best == b.best);
    REQUIRE(a.tree.size() == b.tree.size());
    for (std::size_t i = 0; i < a.tree.size(); ++i) {
        CHECK(a.tree.nodes()[i].segment == b.tree.nodes()[i].segment);
        CHECK(a.tree.nodes()[i].score == b.tree.nodes()[i].score);
    }
}

TEST_CASE("failed generation becomes negative infinity") {
    struct Flaky final : PolicyBackend {
        const ToyBackend& inner;
        explicit Flaky(const ToyBackend& b) : inner(b) {}
        Continuation continue_sequence(const TokenSeq& p, const SamplingParams& s) const override {
            if (s.seed_stream % 3 == 0) throw TransportError("gave up", 3);
            return inner.continue_sequence(p, s);
        }
        ScoredLogprobs score_sequence(const TokenSeq& q, ModelTag t) const override {
            return inner.score_sequence(q, t);
        }
        std::optional<TokenId> eos_id() const override { return inner.eos_id(); }
        std::vector<TokenId> tokenize(std::string_view t) const override { return inner.tokenize(t); }
        std::string detokenize(std::span<const TokenId> t) const override { return inner.detokenize(t); }
        std::string describe() const override { return "flaky"; }
    };
    const auto task = make_tilted_task({});
    const Flaky flaky(task);
    const auto r = run_treebon(cfg(Method::treebon, 16, 12, 3, 4), kPrompt, {flaky, task});
    int failed = 0;
    for (const auto& n : r.tree.nodes()) {
        if (!n.failed) continue;
        ++failed;
        CHECK(n.terminated);
        CHECK(*n.score == -INFINITY);
    }
    CHECK(failed > 0);
    CHECK(std::isfinite(r.best_score));
}
