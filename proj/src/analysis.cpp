// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

#include "treebon/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "treebon/error.hpp"
#include "treebon/parallel.hpp"

namespace treebon {

void to_json(nlohmann::json& j, const RewardTrajectory& t) {
    j = {{"schema_version", 1},
         {"prompt_id", t.prompt_id},
         {"scores", t.scores},
         {"entropies", t.entropies},
         {"segment_boundaries", t.segment_boundaries}};
}

std::vector<std::size_t> segment_boundaries(std::span<const double> entropies, double threshold) {
    if (!std::isfinite(threshold)) throw ConfigError("entropy threshold must be finite");
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < entropies.size(); ++k) {
        if (entropies[k] > threshold) out.push_back(k);
    }
    return out;
}

Correlation prefix_full_correlation(std::span<const std::pair<double, double>> pairs) {
    if (pairs.size() < 3) throw Error("correlation needs at least 3 pairs, got " + std::to_string(pairs.size()));
    const double n = static_cast<double>(pairs.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pairs) {
        mx += x;
        my += y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const auto& [x, y] : pairs) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("correlation undefined: zero variance in partial or full scores");
    Correlation c;
    c.n = pairs.size();
    c.pearson_r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    c.slope = sxy / sxx;
    c.intercept = my - c.slope * mx;
    return c;
}

TrajectoryReport trajectory_report(std::span<const TrajectoryInput> records, const CandidateScorer& scorer,
                                   const PolicyBackend& generator, double fraction, double threshold,
                                   std::size_t workers) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
    const auto* implicit = dynamic_cast<const ImplicitRewardScorer*>(&scorer);

    TrajectoryReport report;
    report.trajectories.resize(records.size());
    parallel_for(records.size(), workers, [&](std::size_t i) {
        const TokenSeq& seq = records[i].sequence;
        RewardTrajectory& t = report.trajectories[i];
        t.prompt_id = records[i].prompt_id;
        const std::size_t K = seq.response_len();
        if (K == 0) throw Error("record " + t.prompt_id + " has an empty response");
        if (implicit) {
            t.scores = implicit->prefix_scores(seq);
        } else {
            t.scores.reserve(K);
            for (std::size_t k = 1; k <= K; ++k) t.scores.push_back(scorer.score(seq.truncated(k)));
        }
        t.entropies.reserve(K);
        for (std::size_t k = 0; k < K; ++k) {
            const auto probs = generator.next_token_distribution(seq.truncated(k));
            t.entropies.push_back(entropy(probs));
        }
        t.segment_boundaries = segment_boundaries(t.entropies, threshold);
    });

    auto& s = report.summary;
    s.fraction = fraction;
    s.threshold = threshold;
    std::vector<std::pair<double, double>> fixed, segment;
    for (const auto& t : report.trajectories) {
        const std::size_t K = t.scores.size();
        const double full = t.scores.back();
        const auto prefix_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * K)));
        fixed.emplace_back(t.scores[prefix_len - 1], full);
        // Longest boundary-terminated prefix not longer than prefix_len.
        std::optional<std::size_t> cut;
        for (std::size_t b : t.segment_boundaries) {
            if (b + 1 <= prefix_len) cut = b;
        }
        if (cut) segment.emplace_back(t.scores[*cut], full);
    }
    s.fixed_pairs = fixed.size();
    s.segment_pairs = segment.size();
    try {
        s.fixed = prefix_full_correlation(fixed);
    } catch (const Error& e) {
        s.fixed_error = e.what();
    }
    try {
        s.segment = prefix_full_correlation(segment);
    } catch (const Error& e) {
        s.segment_error = e.what();
    }
    return report;
}

std::string correlation_csv(const CorrelationSummary& s) {
    std::ostringstream os;
    os.precision(17);
    os << "schema_version,regression,fraction,threshold,pairs,pearson_r,slope,intercept,error\n";
    const auto row = [&](const char* name, std::size_t n, const std::optional<Correlation>& c, const std::string& err) {
        os << 1 << ',' << name << ',' << s.fraction << ',' << s.threshold << ',' << n << ',';
        if (c) {
            os << c->pearson_r << ',' << c->slope << ',' << c->intercept << ",";
        } else {
            os << ",,,";
        }
        os << '"' << err << "\"\n";
    };
    row("fixed_fraction", s.fixed_pairs, s.fixed, s.fixed_error);
    row("segment_boundary", s.segment_pairs, s.segment, s.segment_error);
    return os.str();
}

}  // namespace treebon
