// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "treebon/policy.hpp"
#include "treebon/reward.hpp"

namespace treebon {

/// Token-level partial-reward trajectory of one response.
struct RewardTrajectory {
    std::string prompt_id;
    // scores[k]: reward of the prefix ending at response token k.
    std::vector<double> scores;
    // entropies[k]: generator entropy (nats) of the distribution token k was drawn from.
    std::vector<double> entropies;
    std::vector<std::size_t> segment_boundaries;
};

void to_json(nlohmann::json& j, const RewardTrajectory& t);

/// Indices whose entropy exceeds `threshold` (ends of semantically complete segments).
std::vector<std::size_t> segment_boundaries(std::span<const double> entropies, double threshold);

struct Correlation {
    double pearson_r = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t n = 0;
};

/// OLS fit of full score on partial score, plus Pearson r. Needs >= 3 pairs
/// and non-zero variance in both coordinates.
Correlation prefix_full_correlation(std::span<const std::pair<double, double>> pairs);

struct TrajectoryInput {
    std::string prompt_id;
    TokenSeq sequence;
};

struct CorrelationSummary {
    double fraction = 1.0 / 3.0;
    double threshold = 3.0;
    std::size_t fixed_pairs = 0;
    std::size_t segment_pairs = 0;
    std::optional<Correlation> fixed;
    std::optional<Correlation> segment;
    std::string fixed_error;
    std::string segment_error;
};

struct TrajectoryReport {
    std::vector<RewardTrajectory> trajectories;
    // Prefix at `fraction` of the length vs the full response; and the longest
    // prefix within that fraction that ends on a segment boundary vs the full response.
    CorrelationSummary summary;
};

/// Scores every prefix of every record (a single teacher-forced pass for
/// implicit scorers), records generator entropies, and fits both correlations.
/// Correlation failures are reported in the summary rather than thrown.
TrajectoryReport trajectory_report(std::span<const TrajectoryInput> records, const CandidateScorer& scorer,
                                   const PolicyBackend& generator, double fraction = 1.0 / 3.0,
                                   double threshold = 3.0, std::size_t workers = 1);

/// CSV with a header row; one row per regression.
std::string correlation_csv(const CorrelationSummary& summary);

}  // namespace treebon
