// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/seqtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "treebon/error.hpp"

namespace treebon {

TokenSeq::TokenSeq(std::vector<TokenId> tokens, std::size_t prompt_len, bool terminated)
    : tokens_(std::move(tokens)), prompt_len_(prompt_len), terminated_(terminated) {
    if (prompt_len_ > tokens_.size()) {
        throw ConfigError("prompt_len " + std::to_string(prompt_len_) + " exceeds sequence length " +
                          std::to_string(tokens_.size()));
    }
}

TokenSeq TokenSeq::extended(std::span<const TokenId> segment, bool terminated) const {
    std::vector<TokenId> out;
    out.reserve(tokens_.size() + segment.size());
    out.insert(out.end(), tokens_.begin(), tokens_.end());
    out.insert(out.end(), segment.begin(), segment.end());
    return TokenSeq(std::move(out), prompt_len_, terminated);
}

TokenSeq TokenSeq::truncated(std::size_t response_tokens) const {
    if (response_tokens >= response_len()) return *this;
    std::vector<TokenId> out(tokens_.begin(), tokens_.begin() + static_cast<std::ptrdiff_t>(prompt_len_ + response_tokens));
    return TokenSeq(std::move(out), prompt_len_, false);
}

NodeStore::NodeStore(std::vector<TokenId> prompt) : prompt_(std::move(prompt)) {}

NodeStore NodeStore::from_nodes(std::vector<TokenId> prompt, std::vector<TreeNode> nodes) {
    NodeStore store(std::move(prompt));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (to_index(nodes[i].id) != i) {
            throw IntegrityError("node at position " + std::to_string(i) + " carries id " +
                                 std::to_string(to_index(nodes[i].id)));
        }
    }
    store.nodes_ = std::move(nodes);
    return store;
}

NodeId NodeStore::add_root() {
    TreeNode node;
    node.id = NodeId{static_cast<std::uint32_t>(nodes_.size())};
    node.layer = 1;
    nodes_.push_back(std::move(node));
    return nodes_.back().id;
}

NodeId NodeStore::add_child(NodeId parent) {
    const int layer = at(parent).layer + 1;
    TreeNode node;
    node.id = NodeId{static_cast<std::uint32_t>(nodes_.size())};
    node.parent = parent;
    node.layer = layer;
    nodes_.push_back(std::move(node));
    return nodes_.back().id;
}

const TreeNode& NodeStore::at(NodeId id) const {
    if (!contains(id)) throw IntegrityError("unknown node id " + std::to_string(to_index(id)));
    return nodes_[to_index(id)];
}

TreeNode& NodeStore::at(NodeId id) {
    if (!contains(id)) throw IntegrityError("unknown node id " + std::to_string(to_index(id)));
    return nodes_[to_index(id)];
}

std::vector<NodeId> NodeStore::ancestry(NodeId id) const {
    std::vector<NodeId> path;
    std::optional<NodeId> cur = id;
    while (cur) {
        if (path.size() > nodes_.size()) {
            throw IntegrityError("cyclic parent links reached from node " + std::to_string(to_index(id)));
        }
        path.push_back(*cur);
        cur = at(*cur).parent;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

TokenSeq NodeStore::materialize(NodeId id) const {
    const auto path = ancestry(id);
    std::size_t total = prompt_.size();
    for (NodeId n : path) total += nodes_[to_index(n)].segment.size();

    std::vector<TokenId> tokens;
    tokens.reserve(total);
    tokens.insert(tokens.end(), prompt_.begin(), prompt_.end());
    for (NodeId n : path) {
        const auto& seg = nodes_[to_index(n)].segment;
        tokens.insert(tokens.end(), seg.begin(), seg.end());
    }
    return TokenSeq(std::move(tokens), prompt_.size(), at(id).terminated);
}

std::vector<double> normalize_layer(std::span<const double> scores) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double s : scores) {
        if (!std::isfinite(s)) continue;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    std::vector<double> out(scores.size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) continue;
        out[i] = hi == lo ? 0.5 : (scores[i] - lo) / (hi - lo);
    }
    return out;
}

namespace {

std::string default_preview(std::span<const TokenId> segment) {
    std::string out;
    for (std::size_t i = 0; i < segment.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(segment[i]);
    }
    return out;
}

std::string truncate_text(std::string text, std::size_t limit = 40) {
    if (text.size() > limit) {
        text.resize(limit);
        text += "...";
    }
    return text;
}

std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out;
}

}  // namespace

std::string export_tree(const NodeStore& store, std::span<const LayerState> layers, TreeFormat format,
                        const PreviewFn& preview) {
    const auto nodes = store.nodes();
    int max_layer = 0;
    for (const auto& n : nodes) {
        if (!n.score) throw Error("cannot export tree: node " + std::to_string(to_index(n.id)) + " has no score");
        max_layer = std::max(max_layer, n.layer);
    }

    std::vector<double> norm(nodes.size(), 0.0);
    for (int layer = 1; layer <= max_layer; ++layer) {
        std::vector<std::size_t> members;
        std::vector<double> raw;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].layer == layer) {
                members.push_back(i);
                raw.push_back(*nodes[i].score);
            }
        }
        const auto scaled = normalize_layer(raw);
        for (std::size_t j = 0; j < members.size(); ++j) norm[members[j]] = scaled[j];
    }

    std::unordered_set<std::uint32_t> selected;
    for (const auto& layer : layers) {
        for (NodeId id : layer.selected) selected.insert(to_index(id));
    }

    const auto render = [&](const TreeNode& n) {
        return truncate_text(preview ? preview(n.segment) : default_preview(n.segment));
    };

    if (format == TreeFormat::json) {
        nlohmann::json doc;
        doc["schema_version"] = 1;
        doc["nodes"] = nlohmann::json::array();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto& n = nodes[i];
            nlohmann::json j;
            j["id"] = to_index(n.id);
            j["parent"] = n.parent ? nlohmann::json(to_index(*n.parent)) : nlohmann::json(nullptr);
            j["layer"] = n.layer;
            j["score"] = *n.score;
            j["norm_score"] = norm[i];
            j["selected"] = selected.contains(to_index(n.id));
            j["terminated"] = n.terminated;
            j["text"] = render(n);
            doc["nodes"].push_back(std::move(j));
        }
        return doc.dump(2) + "\n";
    }

    std::ostringstream os;
    os.precision(6);
    os << "// schema_version: 1\ndigraph treebon {\n  rankdir=LR;\n  node [shape=box, style=filled, fontname=\"Helvetica\"];\n";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        const bool sel = selected.contains(to_index(n.id));
        // Blue-to-red ramp on the layer-normalized score.
        const double h = 0.66 * (1.0 - norm[i]);
        os << "  n" << to_index(n.id) << " [label=\"#" << to_index(n.id) << " L" << n.layer << "\\nr=" << *n.score
           << " (" << norm[i] << ")\\n" << dot_escape(render(n)) << "\", fillcolor=\"" << h << " 0.45 0.95\""
           << ", layer=" << n.layer << ", score=\"" << *n.score << "\", norm_score=\"" << norm[i] << "\""
           << ", selected=" << (sel ? "true" : "false") << ", terminated=" << (n.terminated ? "true" : "false");
        if (!sel && n.layer < max_layer) os << ", style=\"filled,dashed\"";
        os << "];\n";
    }
    for (const auto& n : nodes) {
        if (!n.parent) continue;
        const bool child_expanded = selected.contains(to_index(n.id)) || n.layer == max_layer;
        os << "  n" << to_index(*n.parent) << " -> n" << to_index(n.id)
           << (child_expanded ? " [style=solid, color=blue]" : " [style=dotted, color=gray]") << ";\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace treebon
