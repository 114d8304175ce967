// Copyright 2026 The treebon Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "treebon/analysis.hpp"
#include "treebon/budget.hpp"
#include "treebon/harness.hpp"
#include "treebon/search.hpp"
#include "treebon/toy_model.hpp"

using namespace treebon;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_s > 0 && secs > budget_s) {
        o.pass = false;
        o.detail += " (over the " + std::to_string(budget_s) + " s budget)";
    }
    failures += !o.pass;
    std::printf("%s %2d %-32s %s [%.3f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string describe(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

std::vector<TokenId> prompt_tokens(std::mt19937_64& rng, int vocab, TokenId avoid = -1) {
    std::uniform_int_distribution<int> len(1, 6), tok(0, vocab - 1);
    std::vector<TokenId> out(static_cast<std::size_t>(len(rng)));
    for (auto& t : out) {
        do t = tok(rng);
        while (t == avoid);
    }
    return out;
}

// Independent reward oracle: walks the toy tables directly.
double brute_force_reward(const ToyModelTable& aligned, const ToyModelTable& reference, const std::vector<TokenId>& seq,
                          std::size_t prompt_len, RewardKind kind, double beta, double lambda) {
    double sum = 0.0;
    double weight = 1.0;  // lambda^k
    const std::size_t K = seq.size() - prompt_len;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t pos = prompt_len + k;
        const std::size_t row = aligned.order() == 0 ? 0 : static_cast<std::size_t>(seq[pos - 1]);
        const auto y = static_cast<std::size_t>(seq[pos]);
        const double a = std::log(aligned.row_at(row)[y]);
        const double r = std::log(reference.row_at(row)[y]);
        switch (kind) {
            case RewardKind::dpo_implicit:
            case RewardKind::length_normalized: sum += a - r; break;
            case RewardKind::weighted: sum += (a - r) / static_cast<double>(k + 1); break;
            case RewardKind::weighted_exp_decay: sum += weight * (a - r); break;
            case RewardKind::logprob_sum:
            case RewardKind::simpo: sum += a; break;
        }
        weight *= lambda;
    }
    switch (kind) {
        case RewardKind::dpo_implicit:
        case RewardKind::weighted:
        case RewardKind::weighted_exp_decay: return beta * sum;
        case RewardKind::length_normalized: return beta * sum / static_cast<double>(K);
        case RewardKind::logprob_sum: return sum;
        case RewardKind::simpo: return sum / static_cast<double>(K);
    }
    return NAN;
}

std::vector<PromptRecord> synthetic_prompts(int n) {
    std::vector<PromptRecord> out;
    for (int i = 0; i < n; ++i) out.push_back({std::to_string(i), "synthetic prompt " + std::to_string(i)});
    return out;
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::critical);

    criterion(1, "FLOPs table reproduction", 1.0, [] {
        // Rows: roots 8..256; columns: l_max 192 and 384.
        const int roots[] = {8, 16, 32, 64, 128, 256};
        const double table[6][2] = {{6.26e13, 1.24e14}, {1.24e14, 2.47e14}, {2.47e14, 4.93e14},
                                    {4.93e14, 9.84e14}, {9.84e14, 1.97e15}, {1.97e15, 3.93e15}};
        double worst = 0.0;
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 2; ++j) {
                const double got = total_flops(Method::bon, roots[i], j == 0 ? 192 : 384, 1, 1,
                                               kReferencePromptTokens, kDefaultFlopsPerToken);
                worst = std::max(worst, std::abs(got - table[i][j]) / table[i][j]);
            }
        }
        return Outcome{worst <= 0.005, describe("12 cells, max rel err %.3f%% (prompt_tokens=30, fitted)", 100 * worst)};
    });

    criterion(2, "Equal-compute identity", 10.0, [] {
        std::mt19937_64 rng(2);
        const auto task = make_tilted_task({});
        int mismatched_nominal = 0, mismatched_actual = 0;
        for (int i = 0; i < 1000; ++i) {
            const int children = std::uniform_int_distribution<int>(1, 8)(rng);
            const int N = children * std::uniform_int_distribution<int>(1, 4)(rng);
            const int l_max = std::uniform_int_distribution<int>(1, 40)(rng);
            const int layers = std::uniform_int_distribution<int>(1, std::min(l_max, 6))(rng);
            const auto prompt = prompt_tokens(rng, 8);
            SearchConfig tb;
            tb.method = Method::treebon;
            tb.N = N;
            tb.l_max = l_max;
            tb.N_layer = layers;
            tb.N_children = children;
            tb.seed = rng();
            SearchConfig bon = tb;
            bon.method = Method::bon;
            const auto P = static_cast<std::int64_t>(prompt.size());
            mismatched_nominal += total_flops(Method::treebon, N, l_max, layers, children, P, 2.0295e10) !=
                                  total_flops(Method::bon, N, l_max, 1, 1, P, 2.0295e10);
            const auto a = run_treebon(tb, prompt, {task, task});
            const auto b = run_bon(bon, prompt, {task, task});
            mismatched_nominal += a.ledger.nominal_flops != b.ledger.nominal_flops;
            mismatched_actual += a.ledger.generated_total() != b.ledger.generated_total() ||
                                 a.ledger.total_flops != b.ledger.total_flops;
        }
        return Outcome{mismatched_nominal == 0 && mismatched_actual == 0,
                       describe("1000 configs: %.0f nominal and %.0f actual-ledger mismatches", mismatched_nominal,
                           mismatched_actual)};
    });

    criterion(3, "Degenerate equivalence", 0, [] {
        ToyTaskSpec spec;
        spec.eos_prob = 0.05;
        const auto task = make_tilted_task(spec);
        std::mt19937_64 rng(3);
        int bad = 0;
        for (int p = 0; p < 100; ++p) {
            const auto prompt = prompt_tokens(rng, 8, 7);
            SearchConfig tb;
            tb.method = Method::treebon;
            tb.N = 16;
            tb.l_max = 20;
            tb.N_layer = 1;
            tb.N_children = 4;
            tb.seed = 1000 + static_cast<std::uint64_t>(p);
            SearchConfig bon = tb;
            bon.method = Method::bon;
            const auto a = run_treebon(tb, prompt, {task, task});
            const auto b = run_bon(bon, prompt, {task, task});
            bool same = a.tree.size() == b.tree.size() && a.best == b.best;
            for (std::size_t i = 0; same && i < a.tree.size(); ++i) {
                same = a.tree.nodes()[i].segment == b.tree.nodes()[i].segment;
            }
            bad += !same;
        }
        return Outcome{bad == 0, describe("100 prompts, %.0f differing candidate sets or choices", bad)};
    });

    criterion(4, "Reward-variant oracles", 0, [] {
        std::mt19937_64 rng(4);
        const RewardKind kinds[] = {RewardKind::dpo_implicit,      RewardKind::weighted,
                                    RewardKind::weighted_exp_decay, RewardKind::length_normalized,
                                    RewardKind::logprob_sum,        RewardKind::simpo};
        double worst = 0.0;
        int nonzero_identity = 0;
        for (int i = 0; i < 10000; ++i) {
            const int V = std::uniform_int_distribution<int>(2, 10)(rng);
            const int order = static_cast<int>(rng() % 2);
            const auto ref = ToyModelTable::random(V, order, rng(), std::nullopt, 0.0);
            const auto aligned = ToyModelTable::random(V, order, rng(), std::nullopt, 0.0);
            const ToyBackend model(ref, aligned, ref);
            const ToyBackend identity(ref);
            auto seq = prompt_tokens(rng, V);
            const std::size_t plen = seq.size();
            const int K = std::uniform_int_distribution<int>(1, 12)(rng);
            for (int k = 0; k < K; ++k) seq.push_back(static_cast<TokenId>(rng() % static_cast<unsigned>(V)));
            const TokenSeq ts(seq, plen);
            const double beta = 0.1 + 2.0 * std::uniform_real_distribution<double>()(rng);
            for (auto kind : kinds) {
                const PartialRewardVariant v{kind, beta, 0.95};
                const double got = ImplicitRewardScorer(model, v).score(ts);
                const double want = brute_force_reward(aligned, ref, seq, plen, kind, beta, 0.95);
                worst = std::max(worst, std::abs(got - want));
                if (v.needs_reference()) nonzero_identity += ImplicitRewardScorer(identity, v).score(ts) != 0.0;
            }
        }
        return Outcome{worst <= 1e-12 && nonzero_identity == 0,
                       describe("10000 responses x 6 variants, max abs err %.2e, %.0f nonzero identity scores", worst,
                           nonzero_identity)};
    });

    criterion(5, "Selection invariants", 0, [] {
        std::mt19937_64 rng(5);
        int violations = 0, layers_checked = 0;
        for (int run = 0; run < 500; ++run) {
            ToyTaskSpec spec;
            spec.vocab_size = std::uniform_int_distribution<int>(4, 12)(rng);
            spec.target = 1;
            spec.eos_prob = run % 2 ? 0.08 : 0.0;
            spec.seed = rng();
            const auto task = make_tilted_task(spec);
            SearchConfig c;
            c.method = Method::treebon;
            c.N_children = std::uniform_int_distribution<int>(1, 4)(rng);
            c.N = c.N_children * std::uniform_int_distribution<int>(1, 6)(rng);
            c.l_max = std::uniform_int_distribution<int>(4, 24)(rng);
            c.N_layer = std::uniform_int_distribution<int>(1, 4)(rng);
            c.variant.kind = static_cast<RewardKind>(rng() % 6);
            c.seed = rng();
            const auto r = run_treebon(c, prompt_tokens(rng, spec.vocab_size, spec.vocab_size - 1), {task, task});
            violations += r.per_layer.size() != static_cast<std::size_t>(c.N_layer);
            for (std::size_t i = 0; i < r.per_layer.size(); ++i) {
                const auto& L = r.per_layer[i];
                ++layers_checked;
                const bool last = i + 1 == r.per_layer.size();
                const std::size_t keep = last ? 1 : static_cast<std::size_t>(c.N / c.N_children);
                violations += L.candidates.size() != static_cast<std::size_t>(c.N);
                violations += L.selected.size() != keep;
                const std::set<NodeId> sel(L.selected.begin(), L.selected.end());
                double kept = INFINITY, pruned = -INFINITY;
                for (NodeId id : L.candidates) {
                    const double s = *r.tree.at(id).score;
                    (sel.contains(id) ? kept : pruned) = sel.contains(id) ? std::min(kept, s) : std::max(pruned, s);
                }
                violations += !sel.empty() && kept < pruned;
                for (NodeId id : L.selected) violations += !std::count(L.candidates.begin(), L.candidates.end(), id);
            }
        }
        return Outcome{violations == 0,
                       describe("500 runs, %.0f layers, %.0f violations", layers_checked, violations)};
    });

    criterion(6, "SBoN budget math", 0, [] {
        const auto task = make_tilted_task({});
        const std::vector<TokenId> prompt{1, 2, 3};
        double got[2];
        const int lengths[] = {192, 384};
        for (int i = 0; i < 2; ++i) {
            SearchConfig c;
            c.method = Method::sbon;
            c.N = 19;
            c.l_max = lengths[i];
            c.alpha = 0.30;
            got[i] = run_sbon(c, prompt, {task, task}).ledger.nominal_tokens;
        }
        const bool ok = std::abs(got[0] - 3100.8) < 1e-9 && std::abs(got[1] - 6201.6) < 1e-9 &&
                        std::lround(got[0]) == 3101 && std::lround(got[1]) == 6202;
        return Outcome{ok, describe("nominal tokens %.1f and %.1f (table: 3101, 6202)", got[0], got[1])};
    });

    criterion(7, "Synthetic improvement check", 120.0, [] {
        const BackendBundle bundle(BackendSpec{});  // tilted toy task, target-count true reward
        const auto prompts = synthetic_prompts(200);
        SearchConfig tb;
        tb.method = Method::treebon;
        tb.N = 64;
        tb.l_max = 24;
        tb.N_layer = 4;
        tb.N_children = 4;
        tb.variant.kind = RewardKind::weighted;
        tb.final_scorer = FinalScorerKind::external;
        SearchConfig bon = tb;
        bon.method = Method::bon;
        BatchOptions opt;
        opt.seeds = {0};
        const auto a = run_batch(prompts, tb, bundle, opt, nullptr);
        const auto b = run_batch(prompts, bon, bundle, opt, nullptr);
        const auto s = compare_runs(a.records, b.records);
        const bool equal_budget = a.summary.generated_tokens == b.summary.generated_tokens;
        const bool ok = equal_budget && s.mean_diff > 0 && s.p_one_sided < 0.05;
        return Outcome{ok, describe("mean true reward %.3f vs %.3f, one-sided p=%.2g", *a.summary.mean_true_reward,
                               *b.summary.mean_true_reward, s.p_one_sided) +
                               (equal_budget ? ", equal tokens" : ", UNEQUAL tokens")};
    });

    criterion(8, "Correlation methodology", 0, [] {
        std::mt19937_64 rng(8);
        std::normal_distribution<double> nd;
        std::vector<std::pair<double, double>> planted;
        for (int i = 0; i < 500; ++i) {
            const double x = nd(rng);
            planted.emplace_back(x, 0.5 * x + std::sqrt(0.75) * nd(rng));
        }
        const double r_planted = prefix_full_correlation(planted).pearson_r;

        const ToyBackend uniform(ToyModelTable::uniform(16));
        std::vector<TrajectoryInput> inputs;
        for (int i = 0; i < 200; ++i) {
            SamplingParams p;
            p.max_new_tokens = 30;
            p.seed_stream = stream_seed(88, static_cast<std::uint64_t>(i));
            const TokenSeq prompt({1}, 1);
            const auto c = uniform.continue_sequence(prompt, p);
            inputs.push_back({std::to_string(i), prompt.extended(c.segment, c.terminated)});
        }
        const LastTokenScorer last([](TokenId t) { return static_cast<double>(t); });
        const auto report = trajectory_report(inputs, last, uniform);
        const double r_last = report.summary.fixed ? report.summary.fixed->pearson_r : NAN;
        const bool ok = std::abs(r_planted - 0.5) <= 0.1 && std::abs(r_last) < 0.2;
        return Outcome{ok, describe("planted r=0.5 recovered as %.3f; full-sequence-only scorer r=%.3f", r_planted, r_last)};
    });

    criterion(9, "Determinism", 0, [] {
        ToyTaskSpec toy;
        toy.eos_prob = 0.05;
        BackendSpec spec;
        spec.toy = toy;
        const BackendBundle bundle(spec);
        std::ostringstream jsonl;
        BatchOptions opt;
        opt.seeds = {0, 1};
        opt.workers = 4;
        for (auto m : {Method::bon, Method::treebon, Method::sbon, Method::beam}) {
            SearchConfig c;
            c.method = m;
            c.N = 16;
            c.l_max = 16;
            c.N_layer = 4;
            c.N_children = 4;
            c.beam_width = 4;
            run_batch(synthetic_prompts(5), c, bundle, opt, &jsonl);
        }
        // Replays start from the serialized records.
        std::istringstream in(jsonl.str());
        std::string line;
        int records = 0, mismatches = 0;
        while (std::getline(in, line)) {
            const auto rec = nlohmann::json::parse(line).get<RunRecord>();
            const BackendBundle again(rec.backend);
            ++records;
            for (std::size_t workers : {1u, 4u, 16u}) {
                const auto res = replay(rec, again, workers);
                mismatches += !std::equal(res.best.response().begin(), res.best.response().end(),
                                          rec.response_tokens.begin(), rec.response_tokens.end());
            }
        }
        return Outcome{records == 40 && mismatches == 0,
                       describe("%.0f records x workers {1,4,16}: %.0f mismatches", records, mismatches)};
    });

    criterion(10, "Budget splitting", 0, [] {
        long pairs = 0, bad = 0;
        const auto check = [&](int l_max, int layers) {
            const auto b = split_budget(l_max, layers);
            long sum = 0;
            bool positive = b.size() == static_cast<std::size_t>(layers);
            for (int x : b) {
                sum += x;
                positive &= x > 0;
            }
            bad += sum != l_max || !positive || (l_max % layers == 0 && b.front() != b.back());
            ++pairs;
        };
        // Exhaustive below 512, full rows for a few large l_max, random pairs up to 4096.
        for (int l_max = 1; l_max <= 512; ++l_max) {
            for (int layers = 1; layers <= l_max; ++layers) check(l_max, layers);
        }
        for (int l_max : {1000, 1023, 1024, 2047, 3000, 4095, 4096}) {
            for (int layers = 1; layers <= l_max; ++layers) check(l_max, layers);
        }
        std::mt19937_64 rng(10);
        for (int i = 0; i < 20000; ++i) {
            const int l_max = std::uniform_int_distribution<int>(1, 4096)(rng);
            check(l_max, std::uniform_int_distribution<int>(1, l_max)(rng));
        }
        return Outcome{bad == 0, describe("%.0f sampled pairs with 1 <= N_layer <= l_max <= 4096, %.0f bad", pairs, bad)};
    });

    std::printf("%d of 10 criteria failed\n", failures);
    return failures;
}
