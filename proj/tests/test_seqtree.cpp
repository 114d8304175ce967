// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>

#include <json.hpp>

#include "treebon/error.hpp"
#include "treebon/seqtree.hpp"

using namespace treebon;

TEST_CASE("token sequence splits prompt and response") {
    TokenSeq s({1, 2, 3, 4, 5}, 2);
    CHECK(s.prompt().size() == 2);
    CHECK(s.response_len() == 3);
    CHECK(s.response()[0] == 3);

    const std::vector<TokenId> seg{9, 9};
    const auto e = s.extended(seg, true);
    CHECK(e.response_len() == 5);
    CHECK(e.terminated());
    CHECK_FALSE(s.terminated());

    const auto t = e.truncated(1);
    CHECK(t.size() == 3);
    CHECK(t.response()[0] == 3);
    CHECK_THROWS(TokenSeq({1}, 2));
}

TEST_CASE("materialize rebuilds prompt plus ancestor segments") {
    NodeStore store({7, 7});
    const NodeId r = store.add_root();
    store.at(r).segment = {1, 2};
    const NodeId c = store.add_child(r);
    store.at(c).segment = {3};
    const NodeId g = store.add_child(c);
    store.at(g).segment = {4, 5};

    const auto seq = store.materialize(g);
    CHECK(std::vector<TokenId>(seq.tokens().begin(), seq.tokens().end()) == std::vector<TokenId>{7, 7, 1, 2, 3, 4, 5});
    CHECK(seq.prompt_len() == 2);
    CHECK(store.at(g).layer == 3);
    CHECK(store.ancestry(g) == std::vector<NodeId>{r, c, g});
}

TEST_CASE("empty segment carries the parent forward") {
    NodeStore store({1});
    const NodeId r = store.add_root();
    store.at(r).segment = {2, 3};
    const NodeId c = store.add_child(r);
    CHECK(store.materialize(c).tokens().size() == store.materialize(r).tokens().size());
}

TEST_CASE("unknown id and cyclic links are errors") {
    NodeStore store;
    CHECK_THROWS_AS(store.at(NodeId{3}), Error);
    CHECK_THROWS(store.add_child(NodeId{0}));

    TreeNode a{NodeId{0}, NodeId{1}, 1, {1}, {}, false, false};
    TreeNode b{NodeId{1}, NodeId{0}, 2, {2}, {}, false, false};
    const auto bad = NodeStore::from_nodes({}, {a, b});
    CHECK_THROWS_AS(bad.materialize(NodeId{1}), IntegrityError);
}

TEST_CASE("layer normalization") {
    const std::vector<double> s{1.0, 3.0, 2.0};
    const auto n = normalize_layer(s);
    CHECK(n[0] == 0.0);
    CHECK(n[1] == 1.0);
    CHECK(n[2] == 0.5);
    const std::vector<double> flat{2.0, 2.0};
    CHECK(normalize_layer(flat) == std::vector<double>{0.5, 0.5});
}

namespace {

struct SmallTree {
    NodeStore store{{0}};
    std::vector<LayerState> layers;

    SmallTree() {
        for (int i = 0; i < 3; ++i) {
            const NodeId r = store.add_root();
            store.at(r).segment = {i + 1};
            store.at(r).score = i;
        }
        const NodeId c = store.add_child(NodeId{2});
        store.at(c).segment = {5};
        store.at(c).score = 1.5;
        layers.push_back({1, {NodeId{0}, NodeId{1}, NodeId{2}}, {NodeId{2}}});
        layers.push_back({2, {c}, {c}});
    }
};

}  // namespace

TEST_CASE("json export carries normalized scores and selection") {
    SmallTree t;
    const auto j = nlohmann::json::parse(export_tree(t.store, t.layers, TreeFormat::json));
    CHECK(j["schema_version"] == 1);
    REQUIRE(j["nodes"].size() == 4);
    CHECK(j["nodes"][0]["norm_score"] == 0.0);
    CHECK(j["nodes"][2]["norm_score"] == 1.0);
    CHECK(j["nodes"][2]["selected"] == true);
    CHECK(j["nodes"][1]["selected"] == false);
    CHECK(j["nodes"][3]["parent"] == 2);
    CHECK(j["nodes"][3]["norm_score"] == 0.5);
}

TEST_CASE("dot export styles pruned nodes") {
    SmallTree t;
    const auto dot = export_tree(t.store, t.layers, TreeFormat::dot);
    CHECK(dot.rfind("// schema_version: 1\ndigraph", 0) == 0);
    CHECK(dot.find("dashed") != std::string::npos);
    CHECK(dot.find("n2 -> n3") != std::string::npos);
}

TEST_CASE("export rejects unscored nodes") {
    SmallTree t;
    t.store.add_root();
    CHECK_THROWS_WITH_AS(export_tree(t.store, t.layers, TreeFormat::json), doctest::Contains("4"), Error);
}

TEST_CASE("depth-4 chain of 96-token segments") {
    std::vector<TokenId> prompt(30);
    for (int i = 0; i < 30; ++i) prompt[static_cast<std::size_t>(i)] = i;
    NodeStore store(prompt);
    std::vector<TokenId> oracle = prompt;
    std::optional<NodeId> cur;
    for (int depth = 0; depth < 4; ++depth) {
        cur = cur ? store.add_child(*cur) : store.add_root();
        auto& seg = store.at(*cur).segment;
        for (int k = 0; k < 96; ++k) seg.push_back(depth * 1000 + k);
        oracle.insert(oracle.end(), seg.begin(), seg.end());
    }
    const auto seq = store.materialize(*cur);
    CHECK(seq.size() == 30 + 384);
    CHECK(std::equal(seq.tokens().begin(), seq.tokens().end(), oracle.begin(), oracle.end()));
}

TEST_CASE("dot export of an 8-root, 4-children, 3-layer tree") {
    // Layer sizes 8/8/8, two survivors per layer with four children each.
    NodeStore store({0});
    std::vector<LayerState> layers;
    std::vector<NodeId> current;
    for (int i = 0; i < 8; ++i) current.push_back(store.add_root());
    for (int layer = 1; layer <= 3; ++layer) {
        for (std::size_t i = 0; i < current.size(); ++i) store.at(current[i]).score = static_cast<double>(i);
        LayerState st{layer, current, {current[0], current[1]}};
        std::vector<NodeId> next;
        if (layer < 3) {
            for (NodeId p : st.selected) {
                for (int c = 0; c < 4; ++c) next.push_back(store.add_child(p));
            }
        }
        layers.push_back(st);
        current = next;
    }
    const auto dot = export_tree(store, layers, TreeFormat::dot);
    std::size_t nodes = 0, edges = 0;
    for (std::size_t pos = dot.find("[label="); pos != std::string::npos; pos = dot.find("[label=", pos + 1)) ++nodes;
    for (std::size_t pos = dot.find(" -> "); pos != std::string::npos; pos = dot.find(" -> ", pos + 1)) ++edges;
    CHECK(nodes == 8 + 8 + 8);
    CHECK(edges == 16);
}

TEST_CASE("two-score layer normalizes to the endpoints") {
    const std::vector<double> s{2.0, 4.0};
    CHECK(normalize_layer(s) == std::vector<double>{0.0, 1.0});
    const std::vector<double> three{3.0, 3.0, 3.0};
    CHECK(normalize_layer(three) == std::vector<double>{0.5, 0.5, 0.5});
}
