// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace treebon {

using TokenId = std::int32_t;

/// Token sequence with a prompt/response boundary. Immutable once built.
class TokenSeq {
public:
    TokenSeq() = default;
    TokenSeq(std::vector<TokenId> tokens, std::size_t prompt_len, bool terminated = false);

    std::span<const TokenId> tokens() const noexcept { return tokens_; }
    std::span<const TokenId> prompt() const noexcept { return std::span(tokens_).first(prompt_len_); }
    std::span<const TokenId> response() const noexcept { return std::span(tokens_).subspan(prompt_len_); }

    std::size_t size() const noexcept { return tokens_.size(); }
    std::size_t prompt_len() const noexcept { return prompt_len_; }
    std::size_t response_len() const noexcept { return tokens_.size() - prompt_len_; }
    bool terminated() const noexcept { return terminated_; }

    /// Copy of this sequence with `segment` appended to the response.
    TokenSeq extended(std::span<const TokenId> segment, bool terminated) const;
    /// Copy keeping only the first `response_tokens` response tokens.
    TokenSeq truncated(std::size_t response_tokens) const;

    friend bool operator==(const TokenSeq&, const TokenSeq&) = default;

private:
    std::vector<TokenId> tokens_;
    std::size_t prompt_len_ = 0;
    bool terminated_ = false;
};

enum class NodeId : std::uint32_t {};

constexpr std::uint32_t to_index(NodeId id) noexcept { return static_cast<std::uint32_t>(id); }

struct TreeNode {
    NodeId id{};
    std::optional<NodeId> parent;
    int layer = 1;
    std::vector<TokenId> segment;
    std::optional<double> score;
    bool terminated = false;
    // Generation or scoring gave up after retries; score is -inf.
    bool failed = false;
};

/// Candidate set C_i and the survivors P_i chosen from it.
struct LayerState {
    int layer = 1;
    std::vector<NodeId> candidates;
    std::vector<NodeId> selected;
};

/// Append-only arena of tree nodes. Ids are assigned in creation order.
///
/// A node stores only its own segment; prefixes are rebuilt from parent links.
/// Single writer while a layer is being built; safe to share once sealed.
class NodeStore {
public:
    explicit NodeStore(std::vector<TokenId> prompt = {});

    /// Rebuilds a store from serialized nodes. Parent links are not validated
    /// here; `materialize` reports corruption.
    static NodeStore from_nodes(std::vector<TokenId> prompt, std::vector<TreeNode> nodes);

    NodeId add_root();
    NodeId add_child(NodeId parent);

    const TreeNode& at(NodeId id) const;
    TreeNode& at(NodeId id);
    bool contains(NodeId id) const noexcept { return to_index(id) < nodes_.size(); }

    std::size_t size() const noexcept { return nodes_.size(); }
    std::span<const TreeNode> nodes() const noexcept { return nodes_; }
    std::span<const TokenId> prompt() const noexcept { return prompt_; }

    /// Prompt + ancestor segments (root first) + own segment.
    TokenSeq materialize(NodeId id) const;
    /// Root-to-node path.
    std::vector<NodeId> ancestry(NodeId id) const;

private:
    std::vector<TokenId> prompt_;
    std::vector<TreeNode> nodes_;
};

enum class TreeFormat { dot, json };

using PreviewFn = std::function<std::string(std::span<const TokenId>)>;

/// Renders the tree with per-layer min-max normalized scores. Every node must be
/// scored. `layers` supplies the selected flags; `preview` renders a segment
/// (token ids by default).
std::string export_tree(const NodeStore& store, std::span<const LayerState> layers, TreeFormat format,
                        const PreviewFn& preview = {});

/// Min-max normalization into [0,1]; all-equal input maps to 0.5. Non-finite
/// entries map to 0 and are ignored when finding the range.
std::vector<double> normalize_layer(std::span<const double> scores);

}  // namespace treebon
