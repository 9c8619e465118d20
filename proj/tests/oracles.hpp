#pragma once

// Brute-force references shared by the unit and acceptance tests.

#include <algorithm>
#include <set>
#include <vector>

#include "support.hpp"
#include "wordloc/inference.hpp"
#include "wordloc/metrics.hpp"

namespace testing {

inline bool priority_less(const wordloc::Proposal& a, const wordloc::Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.begin != b.begin) return a.begin < b.begin;
    if (a.word != b.word) return a.word < b.word;
    if (a.end != b.end) return a.end < b.end;
    return a.source_segment < b.source_segment;
}

// Textbook formulation: take the best remaining proposal, delete everything
// of its word that it overlaps too much, repeat.
inline std::vector<wordloc::Proposal> nms_oracle(std::vector<wordloc::Proposal> pool, double theta) {
    std::vector<wordloc::Proposal> kept;
    while (!pool.empty()) {
        auto best = std::min_element(pool.begin(), pool.end(), priority_less);
        const wordloc::Proposal b = *best;
        pool.erase(best);
        kept.push_back(b);
        std::erase_if(pool, [&](const wordloc::Proposal& p) {
            return p.word == b.word && wordloc::interval_iou(p.begin, p.end, b.begin, b.end) > theta;
        });
    }
    std::sort(kept.begin(), kept.end(), wordloc::begin_order_less);
    return kept;
}

inline std::vector<wordloc::Proposal> random_proposals(Gen& g, int count) {
    std::vector<wordloc::Proposal> out;
    const int words = static_cast<int>(g.integer(1, 3));
    for (int i = 0; i < count; ++i) {
        const double b = static_cast<double>(g.integer(0, 60));
        const double len = static_cast<double>(g.integer(1, 25));
        // Coarse scores so ties occur.
        const double s = static_cast<double>(g.integer(1, 8)) / 8.0;
        out.push_back({static_cast<int>(g.integer(0, words - 1)), b, b + len, s, i});
    }
    return out;
}

// Utterances with random truths and proposals, some placed near truths.
inline std::vector<wordloc::ScoredUtterance> random_scored_corpus(Gen& g, int keywords, int max_props) {
    std::vector<wordloc::ScoredUtterance> corpus(static_cast<std::size_t>(g.integer(1, 5)));
    int budget = static_cast<int>(g.integer(0, max_props));
    for (auto& u : corpus) {
        u.truth = g.events(keywords, 400, static_cast<int>(g.integer(0, 4)), 60);
        const int n = std::min(budget, static_cast<int>(g.integer(0, 15)));
        budget -= n;
        for (int i = 0; i < n; ++i) {
            double b, e;
            if (!u.truth.empty() && g.coin(0.6)) {
                const auto& t = u.truth[static_cast<std::size_t>(
                    g.integer(0, static_cast<std::int64_t>(u.truth.size()) - 1))];
                b = static_cast<double>(t.span.begin()) + g.real(-20, 20);
                e = static_cast<double>(t.span.end()) + g.real(-20, 20);
                if (e <= b) e = b + 1;
            } else {
                b = g.real(0, 380);
                e = b + g.real(1, 60);
            }
            const double s = static_cast<double>(g.integer(1, 12)) / 12.0; // ties on purpose
            u.proposals.push_back({static_cast<int>(g.integer(0, keywords - 1)), b, e, s, 0});
        }
    }
    return corpus;
}

// Evaluates every candidate threshold with fresh matching.
inline wordloc::MtwvResult mtwv_oracle(const std::vector<wordloc::ScoredUtterance>& corpus,
                                       const std::vector<int>& keywords, double seconds, double beta) {
    using namespace wordloc;
    MtwvResult r;
    double cost_sum = 0.0;
    for (int k : keywords) {
        std::size_t occ = 0;
        std::set<double> scores;
        for (const auto& u : corpus) {
            for (const auto& t : u.truth) occ += t.word == k;
            for (const auto& p : u.proposals)
                if (p.word == k) scores.insert(p.score);
        }
        if (occ == 0) {
            r.excluded.push_back(k);
            continue;
        }
        KeywordOptimum best;
        best.keyword = k;
        best.occurrences = occ;
        double best_cost = 1.0;
        for (auto it = scores.rbegin(); it != scores.rend(); ++it) {
            std::size_t hits = 0, fas = 0;
            for (const auto& u : corpus) {
                std::vector<Event> truth;
                std::vector<Proposal> props;
                for (const auto& t : u.truth)
                    if (t.word == k) truth.push_back(t);
                for (const auto& p : u.proposals)
                    if (p.word == k && p.score >= *it) props.push_back(p);
                const auto m = match_events(truth, props);
                hits += m.pairs.size();
                fas += m.unmatched_proposals.size();
            }
            const double p_miss = static_cast<double>(occ - hits) / static_cast<double>(occ);
            const double p_fa = static_cast<double>(fas) / seconds;
            const double cost = p_miss + beta * p_fa;
            if (cost < best_cost) {
                best_cost = cost;
                best.lambda = *it;
                best.p_miss = p_miss;
                best.p_fa = p_fa;
                best.hits = hits;
                best.false_alarms = fas;
            }
        }
        cost_sum += best_cost;
        r.keywords.push_back(best);
    }
    r.mtwv = r.keywords.empty() ? 0.0 : 1.0 - cost_sum / static_cast<double>(r.keywords.size());
    return r;
}

inline bool same_result(const wordloc::MtwvResult& a, const wordloc::MtwvResult& b) {
    if (a.mtwv != b.mtwv || a.excluded != b.excluded || a.keywords.size() != b.keywords.size()) return false;
    for (std::size_t i = 0; i < a.keywords.size(); ++i) {
        const auto &x = a.keywords[i], &y = b.keywords[i];
        if (x.keyword != y.keyword || x.lambda != y.lambda || x.hits != y.hits || x.false_alarms != y.false_alarms ||
            x.p_miss != y.p_miss || x.p_fa != y.p_fa)
            return false;
    }
    return true;
}

} // namespace testing
