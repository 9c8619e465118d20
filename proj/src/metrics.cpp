#include "wordloc/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "wordloc/error.hpp"

namespace wordloc {

namespace {

// Proposal processing order shared by matching and the sweep.
bool stronger(const Proposal& a, const Proposal& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    if (a.begin != b.begin) return a.begin < b.begin;
    if (a.word != b.word) return a.word < b.word;
    return a.end < b.end;
}

double truth_iou(const Event& t, const Proposal& p) {
    return interval_iou(static_cast<double>(t.span.begin()), static_cast<double>(t.span.end()), p.begin, p.end);
}

// Returns the index of the claimed truth, or npos.
std::size_t claim(std::span<const Event> truth, std::vector<char>& claimed, const Proposal& p, double& iou_out) {
    std::size_t best = static_cast<std::size_t>(-1);
    double best_iou = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (claimed[i] || truth[i].word != p.word) continue;
        const double iou = truth_iou(truth[i], p);
        if (iou > best_iou) {
            best_iou = iou;
            best = i;
        }
    }
    if (best != static_cast<std::size_t>(-1)) {
        claimed[best] = 1;
        iou_out = best_iou;
    }
    return best;
}

double safe_div(double num, double den, const char* name, std::vector<std::string>& undefined) {
    if (den <= 0.0) {
        undefined.emplace_back(name);
        return 0.0;
    }
    return num / den;
}

} // namespace

MatchResult match_events(std::span<const Event> truth, std::span<const Proposal> proposals) {
    std::vector<std::size_t> order(proposals.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return stronger(proposals[a], proposals[b]); });

    MatchResult m;
    std::vector<char> claimed(truth.size(), 0);
    for (std::size_t pi : order) {
        double iou = 0.0;
        const std::size_t ti = claim(truth, claimed, proposals[pi], iou);
        if (ti == static_cast<std::size_t>(-1)) {
            m.unmatched_proposals.push_back(pi);
        } else {
            m.pairs.push_back({ti, pi, iou});
        }
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!claimed[i]) m.unmatched_truth.push_back(i);
    }
    std::sort(m.unmatched_proposals.begin(), m.unmatched_proposals.end());
    return m;
}

void DetectionCounts::add(const MatchResult& m, double accuracy_iou) {
    true_positives += m.pairs.size();
    false_positives += m.unmatched_proposals.size();
    false_negatives += m.unmatched_truth.size();
    for (const auto& p : m.pairs) {
        iou_sum += p.iou;
        if (p.iou >= accuracy_iou) ++accurate;
    }
}

DetectionScores detection_scores(const DetectionCounts& c) {
    DetectionScores s;
    const double tp = static_cast<double>(c.true_positives);
    s.precision = safe_div(tp, static_cast<double>(c.proposals()), "precision", s.undefined);
    s.recall = safe_div(tp, static_cast<double>(c.truths()), "recall", s.undefined);
    s.f1 = safe_div(2.0 * s.precision * s.recall, s.precision + s.recall, "f1", s.undefined);
    s.actual_accuracy =
        safe_div(static_cast<double>(c.accurate), static_cast<double>(c.truths()), "actual_accuracy", s.undefined);
    s.avg_iou = safe_div(c.iou_sum, tp, "avg_iou", s.undefined);
    return s;
}

double twv(std::span<const KwsOperatingPoint> points, double beta) {
    if (points.empty()) fail("TWV needs at least one keyword");
    double sum = 0.0;
    for (const auto& p : points) sum += p.p_miss + beta * p.p_fa;
    return 1.0 - sum / static_cast<double>(points.size());
}

namespace {

struct KeywordSweep {
    std::size_t occurrences = 0;
    // After each distinct-score group: (threshold, hits, false alarms).
    struct Step {
        double lambda;
        std::size_t hits;
        std::size_t false_alarms;
    };
    std::vector<Step> steps;
};

KeywordSweep sweep_keyword(std::span<const ScoredUtterance> corpus, int keyword) {
    KeywordSweep sw;
    struct Item {
        std::size_t utt;
        const Proposal* p;
    };
    std::vector<Item> items;
    std::vector<std::vector<char>> claimed(corpus.size());
    for (std::size_t u = 0; u < corpus.size(); ++u) {
        claimed[u].assign(corpus[u].truth.size(), 0);
        for (const auto& t : corpus[u].truth) sw.occurrences += t.word == keyword;
        for (const auto& p : corpus[u].proposals) {
            if (p.word == keyword) items.push_back({u, &p});
        }
    }
    // Matching within an utterance only depends on the relative order of its
    // own proposals, so one global pass reproduces per-threshold matching.
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.p->score != b.p->score) return a.p->score > b.p->score;
        if (a.utt != b.utt) return a.utt < b.utt;
        return stronger(*a.p, *b.p);
    });
    std::size_t hits = 0, fas = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        double iou = 0.0;
        if (claim(corpus[it.utt].truth, claimed[it.utt], *it.p, iou) != static_cast<std::size_t>(-1)) {
            ++hits;
        } else {
            ++fas;
        }
        if (i + 1 == items.size() || items[i + 1].p->score != it.p->score) {
            sw.steps.push_back({it.p->score, hits, fas});
        }
    }
    return sw;
}

} // namespace

MtwvResult mtwv_sweep(std::span<const ScoredUtterance> corpus, std::span<const int> keywords, double audio_seconds,
                      double beta) {
    if (!(audio_seconds > 0.0)) fail("MTWV needs a positive audio duration");
    MtwvResult result;
    double cost_sum = 0.0;
    for (int k : keywords) {
        const auto sw = sweep_keyword(corpus, k);
        if (sw.occurrences == 0) {
            result.excluded.push_back(k);
            continue;
        }
        const double occ = static_cast<double>(sw.occurrences);
        KeywordOptimum best;
        best.keyword = k;
        best.occurrences = sw.occurrences;
        double best_cost = 1.0; // reject everything: P_miss = 1, P_FA = 0
        // Steps run from the highest threshold down; strict improvement keeps
        // the higher threshold on ties.
        for (const auto& st : sw.steps) {
            const double p_miss = static_cast<double>(sw.occurrences - st.hits) / occ;
            const double p_fa = static_cast<double>(st.false_alarms) / audio_seconds;
            const double cost = p_miss + beta * p_fa;
            if (cost < best_cost) {
                best_cost = cost;
                best.lambda = st.lambda;
                best.p_miss = p_miss;
                best.p_fa = p_fa;
                best.hits = st.hits;
                best.false_alarms = st.false_alarms;
            }
        }
        cost_sum += best_cost;
        result.keywords.push_back(best);
    }
    if (result.keywords.empty()) fail("no keyword occurs in the reference; MTWV undefined");
    result.mtwv = 1.0 - cost_sum / static_cast<double>(result.keywords.size());
    return result;
}

double twv_at(std::span<const ScoredUtterance> corpus, std::span<const int> keywords, double audio_seconds,
              double lambda, double beta) {
    if (!(audio_seconds > 0.0)) fail("TWV needs a positive audio duration");
    std::vector<KwsOperatingPoint> points;
    for (int k : keywords) {
        std::size_t occ = 0, hits = 0, fas = 0;
        for (const auto& u : corpus) {
            std::vector<Event> truth;
            std::vector<Proposal> props;
            for (const auto& t : u.truth) {
                if (t.word == k) truth.push_back(t);
            }
            for (const auto& p : u.proposals) {
                if (p.word == k && p.score >= lambda) props.push_back(p);
            }
            occ += truth.size();
            const auto m = match_events(truth, props);
            hits += m.pairs.size();
            fas += m.unmatched_proposals.size();
        }
        if (occ == 0) continue;
        points.push_back({k, lambda, static_cast<double>(occ - hits) / static_cast<double>(occ),
                          static_cast<double>(fas) / audio_seconds});
    }
    return twv(points, beta);
}

} // namespace wordloc
